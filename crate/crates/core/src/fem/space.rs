//! Linear Lagrange spaces with hanging-node and Dirichlet condensation.

use std::collections::HashMap;

use crate::fem::mesh::Mesh;
use crate::fem::solver::CsrMatrix;
use crate::homogenize::CoefficientField;
use crate::media::BoundaryKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Physics {
    ScalarDiffusion,
    PlaneStrain,
}

impl Physics {
    pub fn components(self) -> usize {
        match self {
            Physics::ScalarDiffusion => 1,
            Physics::PlaneStrain => 2,
        }
    }
}

/// Maps full dofs (`vertex * ncomp + component`) to free unknowns.
///
/// Dirichlet dofs expand to nothing (homogeneous data), hanging dofs to the
/// weighted free dofs of their masters.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub ncomp: usize,
    pub nfree: usize,
    pub dirichlet: Vec<bool>,
    exp_ptr: Vec<u32>,
    exp: Vec<(u32, f64)>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, physics: Physics) -> DofMap {
        let ncomp = physics.components();
        let nv = mesh.num_vertices();
        let mut dir_vertex = vec![false; nv];
        for f in &mesh.boundary {
            if f.kind == BoundaryKind::Dirichlet {
                for v in f.vertices {
                    dir_vertex[v as usize] = true;
                }
            }
        }
        let mut master_of: Vec<Option<[u32; 2]>> = vec![None; nv];
        for h in &mesh.hanging {
            master_of[h.slave as usize] = Some(h.masters);
        }
        let mut free_vertex = vec![u32::MAX; nv];
        let mut nfree_vertices = 0u32;
        for v in 0..nv {
            if !dir_vertex[v] && master_of[v].is_none() {
                free_vertex[v] = nfree_vertices;
                nfree_vertices += 1;
            }
        }
        // vertex-level expansions, resolving chains of hanging nodes
        let mut memo: Vec<Option<Vec<(u32, f64)>>> = vec![None; nv];
        fn expand(
            v: usize,
            dir: &[bool],
            masters: &[Option<[u32; 2]>],
            free: &[u32],
            memo: &mut Vec<Option<Vec<(u32, f64)>>>,
        ) -> Vec<(u32, f64)> {
            if let Some(e) = &memo[v] {
                return e.clone();
            }
            let out = if dir[v] {
                Vec::new()
            } else if let Some(m) = masters[v] {
                let mut acc: Vec<(u32, f64)> = Vec::new();
                for mv in m {
                    for (k, w) in expand(mv as usize, dir, masters, free, memo) {
                        match acc.iter_mut().find(|(kk, _)| *kk == k) {
                            Some(slot) => slot.1 += 0.5 * w,
                            None => acc.push((k, 0.5 * w)),
                        }
                    }
                }
                acc.sort_by_key(|e| e.0);
                acc
            } else {
                vec![(free[v], 1.0)]
            };
            memo[v] = Some(out.clone());
            out
        }
        let mut exp_ptr = vec![0u32];
        let mut exp = Vec::new();
        let mut dirichlet = Vec::with_capacity(nv * ncomp);
        for v in 0..nv {
            let ev = expand(v, &dir_vertex, &master_of, &free_vertex, &mut memo);
            for c in 0..ncomp {
                exp.extend(ev.iter().map(|&(k, w)| (k * ncomp as u32 + c as u32, w)));
                exp_ptr.push(exp.len() as u32);
                dirichlet.push(dir_vertex[v]);
            }
        }
        DofMap {
            ncomp,
            nfree: nfree_vertices as usize * ncomp,
            dirichlet,
            exp_ptr,
            exp,
        }
    }

    pub fn expansion(&self, full: usize) -> &[(u32, f64)] {
        &self.exp[self.exp_ptr[full] as usize..self.exp_ptr[full + 1] as usize]
    }

    /// Free-dof right-hand side of a full-dof load vector.
    pub fn condense(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nfree];
        for (d, &val) in full.iter().enumerate() {
            if val != 0.0 {
                for &(k, w) in self.expansion(d) {
                    out[k as usize] += w * val;
                }
            }
        }
        out
    }

    /// Full-dof values of a free-dof vector.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        (0..self.exp_ptr.len() - 1)
            .map(|d| self.expansion(d).iter().map(|&(k, w)| w * free[k as usize]).sum())
            .collect()
    }
}

/// Geometric element matrices for each material eigenvalue: scalar `int grad
/// phi_a . grad phi_b`; plane strain volumetric `tr tr / 2` and deviatoric
/// `eps:eps - tr tr / 2`, each times the element area.
pub fn element_matrices(mesh: &Mesh, e: usize, physics: Physics) -> [[[f64; 6]; 6]; 2] {
    let g = &mesh.geom[e];
    let mut k = [[[0.0; 6]; 6]; 2];
    match physics {
        Physics::ScalarDiffusion => {
            for a in 0..3 {
                for b in 0..3 {
                    k[0][a][b] = g.area * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
                }
            }
        }
        Physics::PlaneStrain => {
            let strain = |a: usize| -> ([f64; 3], f64) {
                let (n, c) = (a / 2, a % 2);
                let gr = g.grads[n];
                // (eps_xx, eps_yy, eps_xy)
                if c == 0 {
                    ([gr[0], 0.0, 0.5 * gr[1]], gr[0])
                } else {
                    ([0.0, gr[1], 0.5 * gr[0]], gr[1])
                }
            };
            for a in 0..6 {
                let (ea, ta) = strain(a);
                for b in 0..6 {
                    let (eb, tb) = strain(b);
                    let dd = ea[0] * eb[0] + ea[1] * eb[1] + 2.0 * ea[2] * eb[2];
                    k[0][a][b] = g.area * 0.5 * ta * tb;
                    k[1][a][b] = g.area * (dd - 0.5 * ta * tb);
                }
            }
        }
    }
    k
}

/// Products of the two fields' gradients split by material eigenvalue, per
/// unit area: scalar `grad u . grad v`; plane strain `tr tr / 2` and
/// `eps:eps - tr tr / 2`.
pub fn mode_products(mesh: &Mesh, e: usize, physics: Physics, u: &[f64], v: &[f64]) -> [f64; 2] {
    let g = &mesh.geom[e];
    let t = mesh.triangles[e];
    match physics {
        Physics::ScalarDiffusion => {
            let mut gu = [0.0; 2];
            let mut gv = [0.0; 2];
            for a in 0..3 {
                let (uu, vv) = (u[t[a] as usize], v[t[a] as usize]);
                gu[0] += uu * g.grads[a][0];
                gu[1] += uu * g.grads[a][1];
                gv[0] += vv * g.grads[a][0];
                gv[1] += vv * g.grads[a][1];
            }
            [gu[0] * gv[0] + gu[1] * gv[1], 0.0]
        }
        Physics::PlaneStrain => {
            let eu = strain_of(g, t, u);
            let ev = strain_of(g, t, v);
            let (tu, tv) = (eu[0] + eu[1], ev[0] + ev[1]);
            let dd = eu[0] * ev[0] + eu[1] * ev[1] + 2.0 * eu[2] * ev[2];
            [0.5 * tu * tv, dd - 0.5 * tu * tv]
        }
    }
}

/// `(eps_xx, eps_yy, eps_xy)` of a displacement field on one element.
pub fn strain_of(g: &crate::fem::mesh::ElementGeom, t: [u32; 3], u: &[f64]) -> [f64; 3] {
    let mut du = [[0.0; 2]; 2];
    for a in 0..3 {
        for c in 0..2 {
            let val = u[2 * t[a] as usize + c];
            du[c][0] += val * g.grads[a][0];
            du[c][1] += val * g.grads[a][1];
        }
    }
    [du[0][0], du[1][1], 0.5 * (du[0][1] + du[1][0])]
}

/// Sparsity pattern of the condensed stiffness matrix and, per element, the
/// value positions its local entries are scattered to.
#[derive(Clone, Debug)]
pub struct AssemblyPlan {
    pub physics: Physics,
    pattern: CsrMatrix,
    elem_ptr: Vec<u32>,
    /// (position in vals, geometric value per eigenvalue)
    entries: Vec<(u32, [f64; 2])>,
}

impl AssemblyPlan {
    pub fn new(mesh: &Mesh, dofs: &DofMap, physics: Physics) -> AssemblyPlan {
        let ncomp = physics.components();
        let nloc = 3 * ncomp;
        let local_dofs = |e: usize| -> Vec<usize> {
            let t = mesh.triangles[e];
            (0..nloc).map(|a| t[a / ncomp] as usize * ncomp + a % ncomp).collect()
        };
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); dofs.nfree];
        for e in 0..mesh.num_elements() {
            let ld = local_dofs(e);
            for &da in &ld {
                for &(i, _) in dofs.expansion(da) {
                    for &db in &ld {
                        rows[i as usize].extend(dofs.expansion(db).iter().map(|&(j, _)| j));
                    }
                }
            }
        }
        let mut row_ptr = vec![0u32];
        let mut cols = Vec::new();
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len() as u32);
        }
        drop(rows);
        let nnz = cols.len();
        let pattern = CsrMatrix {
            n: dofs.nfree,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        };
        let mut elem_ptr = vec![0u32];
        let mut entries = Vec::new();
        for e in 0..mesh.num_elements() {
            let ld = local_dofs(e);
            let k = element_matrices(mesh, e, physics);
            // merge duplicates within the element before storing
            let mut acc: HashMap<u32, [f64; 2]> = HashMap::new();
            let mut order: Vec<u32> = Vec::new();
            for (a, &da) in ld.iter().enumerate() {
                for &(i, wi) in dofs.expansion(da) {
                    for (b, &db) in ld.iter().enumerate() {
                        for &(j, wj) in dofs.expansion(db) {
                            let pos = pattern.position(i as usize, j as usize).expect("pattern entry") as u32;
                            let slot = acc.entry(pos).or_insert_with(|| {
                                order.push(pos);
                                [0.0; 2]
                            });
                            let w = wi * wj;
                            slot[0] += w * k[0][a][b];
                            slot[1] += w * k[1][a][b];
                        }
                    }
                }
            }
            entries.extend(order.iter().map(|p| (*p, acc[p])));
            elem_ptr.push(entries.len() as u32);
        }
        AssemblyPlan {
            physics,
            pattern,
            elem_ptr,
            entries,
        }
    }

    pub fn nnz(&self) -> usize {
        self.pattern.cols.len()
    }

    pub fn assemble(&self, coeff: &CoefficientField) -> CsrMatrix {
        let mut m = self.pattern.clone();
        for e in 0..self.elem_ptr.len() - 1 {
            let (c, _) = coeff.moduli(e).modes();
            let (a, b) = (self.elem_ptr[e] as usize, self.elem_ptr[e + 1] as usize);
            for &(pos, g) in &self.entries[a..b] {
                m.vals[pos as usize] += c[0] * g[0] + c[1] * g[1];
            }
        }
        m
    }
}

/// `K u` with the unconstrained element matrices (every vertex dof kept).
pub fn apply_full_stiffness(mesh: &Mesh, physics: Physics, coeff: &CoefficientField, u: &[f64]) -> Vec<f64> {
    let ncomp = physics.components();
    let mut out = vec![0.0; u.len()];
    for e in 0..mesh.num_elements() {
        let k = element_matrices(mesh, e, physics);
        let (c, _) = coeff.moduli(e).modes();
        let t = mesh.triangles[e];
        let ld: Vec<usize> = (0..3 * ncomp).map(|a| t[a / ncomp] as usize * ncomp + a % ncomp).collect();
        for (a, &da) in ld.iter().enumerate() {
            for (b, &db) in ld.iter().enumerate() {
                out[da] += (c[0] * k[0][a][b] + c[1] * k[1][a][b]) * u[db];
            }
        }
    }
    out
}
