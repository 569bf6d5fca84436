//! Stable sets under a truncated group action, and the Urysohn-style
//! construction of group-continuous step functions.
//!
//! For a truncation of a group with neighborhood filter `U_1, U_2, ...`
//! the thickening of a set is `U_m A = union of u A` over the listed
//! elements of `U_m`, and
//!
//! ```text
//! tilde(A) = intersection over m <= depth of U_m A.
//! ```
//!
//! A set is stable when `tilde(A) = A`. Stable sets admit separated
//! collars (`separate`), and a binary tree of stable sets yields a step
//! function close to a target indicator whose oscillation under every
//! listed `U_m` element is certified exactly. On a whirly-like
//! truncation no usable stable sets exist and the builder degenerates to
//! a constant, saying so.
//!
//! Modeling notes for finite truncations: `tilde` is only known to be
//! idempotent in the limit (the inclusion `U_{m+1}^2` inside `U_m` need
//! not hold element-wise here), so [`tilde_closure`] iterates to the
//! genuine fixed point where stability is required. Equivariance of the
//! thickening under conjugation holds only against explicitly
//! conjugated element lists — a finite list cannot certify it for every
//! group element.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{pow2_inv, rat, Rat};
use crate::perm::{DyadicPermutation, GroupTruncation};
use crate::set::DyadicSet;
use crate::step::StepFunction;

/// A group truncation with its per-scale neighborhood sublists
/// materialized: for each `m <= depth`, the listed elements lying in
/// `U_m` together with their exact worst defects.
pub struct ActionTruncation {
    resolution: u32,
    /// `sublists[m-1]` is the `U_m` sublist.
    sublists: Vec<Vec<(String, DyadicPermutation, Rat)>>,
}

impl ActionTruncation {
    pub fn build(group: &GroupTruncation, depth: u32) -> Result<Self> {
        let resolution = group.resolution();
        if depth == 0 || depth > resolution {
            return Err(Error::Precision {
                m: depth,
                resolution,
            });
        }
        let id = DyadicPermutation::identity(resolution)?;
        let mut sublists = Vec::with_capacity(depth as usize);
        for m in 1..=depth {
            let mut members = group.grid_members(m)?;
            if !members.iter().any(|(_, p, _)| p.is_identity()) {
                members.insert(0, ("Id".to_string(), id.clone(), Rat::zero()));
            }
            sublists.push(members);
        }
        Ok(ActionTruncation {
            resolution,
            sublists,
        })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn depth(&self) -> u32 {
        self.sublists.len() as u32
    }

    pub fn sublist(&self, m: u32) -> Result<&[(String, DyadicPermutation, Rat)]> {
        if m == 0 || m > self.depth() {
            return Err(Error::InsufficientTruncation { m });
        }
        let list = &self.sublists[(m - 1) as usize];
        if list.is_empty() {
            return Err(Error::InsufficientTruncation { m });
        }
        Ok(list)
    }

    /// `U_m A`: the union of images of `A` under the `U_m` sublist.
    pub fn thicken(&self, a: &DyadicSet, m: u32) -> Result<DyadicSet> {
        let mut out = a.refine(self.resolution)?;
        for (_, p, _) in self.sublist(m)? {
            out = out.union(&p.push_forward(a)?)?;
        }
        Ok(out)
    }
}

/// Union of images of `A` under an explicit element list.
pub fn orbit_thicken(a: &DyadicSet, elements: &[DyadicPermutation]) -> Result<DyadicSet> {
    let mut resolution = a.resolution();
    for p in elements {
        resolution = resolution.max(p.resolution());
    }
    let mut out = DyadicSet::empty(resolution)?;
    for p in elements {
        out = out.union(&p.push_forward(a)?)?;
    }
    Ok(out)
}

/// `tilde(A)` at the given depth: the intersection of the thickenings
/// `U_m A`, `m = 1..=depth`. Contains `A`; antitone in depth.
pub fn tilde(a: &DyadicSet, action: &ActionTruncation, depth: u32) -> Result<DyadicSet> {
    if depth == 0 || depth > action.depth() {
        return Err(Error::InsufficientTruncation { m: depth });
    }
    let mut out = action.thicken(a, 1)?;
    for m in 2..=depth {
        out = out.intersect(&action.thicken(a, m)?)?;
    }
    Ok(out)
}

/// Iterate `tilde` to its fixed point: the smallest stable superset of
/// `A` reachable by thickening (the measure algebra is finite, so the
/// ascent terminates).
pub fn tilde_closure(a: &DyadicSet, action: &ActionTruncation, depth: u32) -> Result<DyadicSet> {
    let mut cur = a.refine(action.resolution())?;
    loop {
        let next = tilde(&cur, action, depth)?;
        if next == cur {
            return Ok(cur);
        }
        cur = next;
    }
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub stable: bool,
    /// `mu(tilde(A) \ A)`, exact.
    pub defect: Rat,
}

pub fn is_stable(a: &DyadicSet, action: &ActionTruncation, depth: u32) -> Result<StabilityReport> {
    if a.is_empty() {
        return Ok(StabilityReport {
            stable: true,
            defect: Rat::zero(),
        });
    }
    let t = tilde(a, action, depth)?;
    let defect = t.minus(a)?.measure();
    Ok(StabilityReport {
        stable: defect.is_zero(),
        defect,
    })
}

/// Result of the separation construction, with all three postconditions
/// re-verified exactly before it is returned.
#[derive(Clone, Debug)]
pub struct Separation {
    pub d: DyadicSet,
    /// Scale used for the thickening step.
    pub m: u32,
    /// Scale at which the collars are disjoint (`m + 2`).
    pub k: u32,
}

/// Given a stable positive `A` and a mass budget, produce a stable
/// `D` inside the complement with `mu(A^c \ D) < eps` and disjoint
/// collars `U_k A, U_k D` at `k = m + 2`.
pub fn separate(
    a: &DyadicSet,
    eps: &Rat,
    action: &ActionTruncation,
    depth: u32,
) -> Result<Separation> {
    if eps <= &Rat::zero() {
        return Err(Error::Degenerate("eps must be positive".into()));
    }
    let report = is_stable(a, action, depth)?;
    if !report.stable {
        return Err(Error::SeparationFailed(format!(
            "input set is not stable (defect {})",
            report.defect
        )));
    }
    let mut chosen = None;
    for m in 1..=depth {
        if action.thicken(a, m)?.minus(a)?.measure() < *eps {
            chosen = Some(m);
            break;
        }
    }
    let m = chosen.ok_or_else(|| {
        Error::SeparationFailed(format!("no m <= {depth} thickens A by less than {eps}"))
    })?;
    if m + 2 > action.depth() {
        return Err(Error::SeparationFailed(format!(
            "k = {} exceeds truncation depth {}",
            m + 2,
            action.depth()
        )));
    }
    let e = action.thicken(a, m)?.complement();
    let d = tilde(&e, action, depth)?;
    let k = m + 2;

    // exact postcondition verification
    let complement = a.complement();
    if !d.is_subset_of(&complement)? {
        return Err(Error::SeparationFailed(
            "tilde(E) escapes the complement of A".into(),
        ));
    }
    let missed = complement.minus(&d)?.measure();
    if &missed >= eps {
        return Err(Error::SeparationFailed(format!(
            "complement coverage defect {missed} >= {eps}"
        )));
    }
    let overlap = action
        .thicken(a, k)?
        .intersect(&action.thicken(&d, k)?)?
        .measure();
    if !overlap.is_zero() {
        return Err(Error::SeparationFailed(format!(
            "collars at k = {k} overlap with measure {overlap}"
        )));
    }
    Ok(Separation { d, m, k })
}

/// Average of the Koopman images of `f` over a finite subgroup given as
/// an explicit list. The list must be closed under inverse and
/// composition; the result is fixed by every listed element, exactly.
pub fn h_average(f: &StepFunction, h: &[DyadicPermutation]) -> Result<StepFunction> {
    if h.is_empty() {
        return Err(Error::Degenerate("empty element list".into()));
    }
    for (i, p) in h.iter().enumerate() {
        let inv = p.inverse();
        if !h.contains(&inv) {
            return Err(Error::GroupNotClosed(format!(
                "inverse of element {i} is missing"
            )));
        }
        for (j, q) in h.iter().enumerate() {
            let prod = p.compose(q)?;
            if !h.contains(&prod) {
                return Err(Error::GroupNotClosed(format!(
                    "product of elements {i} and {j} is missing"
                )));
            }
        }
    }
    let mut sum = h[0].koopman(f)?;
    for p in &h[1..] {
        sum = sum.add(&p.koopman(f)?)?;
    }
    let avg = sum.scale(&(Rat::one() / rat(h.len() as i64, 1)));
    for p in h {
        if p.koopman(&avg)? != avg {
            return Err(Error::GroupNotClosed(
                "average is not invariant; element list is inconsistent".into(),
            ));
        }
    }
    Ok(avg)
}

// ---------------- Urysohn construction --------------------------------------

/// One verified oscillation bound: every listed element of `U_m` moves
/// `f` by at most `osc` in the sup norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateRow {
    pub m: u32,
    #[serde(with = "crate::exact::frac_string")]
    pub osc: Rat,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ContinuityCertificate {
    pub rows: Vec<CertificateRow>,
}

pub struct UrysohnOutput {
    pub f: StepFunction,
    pub certificate: ContinuityCertificate,
    /// `||f - 1_A||_2^2`, exact.
    pub l2_error_sq: Rat,
    /// Mass of the union of the constructed level sets.
    pub coverage: Rat,
    /// Explanation when the builder had to emit a constant.
    pub degenerate: Option<String>,
    /// Branch terminations and other structural events.
    pub termination_log: Vec<String>,
}

impl UrysohnOutput {
    /// `||f - 1_A||_2^2 < eps^2`, i.e. the L2 target was met.
    pub fn meets(&self, eps: &Rat) -> bool {
        self.l2_error_sq < eps.clone() * eps.clone()
    }
}

struct LevelSet {
    value: Rat,
    set: DyadicSet,
}

/// A pair of adjacent level sets still eligible for refinement,
/// together with the arena the refinement must stay inside.
struct Pair {
    lo: usize,
    hi: usize,
    arena: DyadicSet,
    alive: bool,
}

/// Build a step function close to `1_A` out of a binary tree of stable
/// sets, with an exactly verified oscillation certificate.
pub fn urysohn(
    a: &DyadicSet,
    eps: &Rat,
    action: &ActionTruncation,
    max_depth: u32,
) -> Result<UrysohnOutput> {
    if eps <= &Rat::zero() {
        return Err(Error::Degenerate("eps must be positive".into()));
    }
    let depth = max_depth.min(action.depth());
    if depth == 0 {
        return Err(Error::InsufficientTruncation { m: 0 });
    }
    let resolution = action.resolution();
    let a = a.refine(resolution)?;
    let mut log = Vec::new();

    // trivial targets need no tree
    if a.is_empty() || a.complement().is_empty() {
        let f = StepFunction::indicator(&a);
        return finalize(f, &a, action, depth, Vec::new(), None, Rat::one(), log);
    }

    let budget = eps.clone() / rat(2, 1);

    // level 0: stable approximations of A (value 1) and of A^c (value 0)
    let d_one = match stable_core(&a, &budget, action, depth)? {
        Some(d) => d,
        None => {
            return degenerate_constant(
                &a,
                action,
                depth,
                format!("no stable approximation of the target within {budget}"),
                log,
            );
        }
    };
    let d_zero = match stable_core(&a.complement(), &budget, action, depth)? {
        Some(d) => d,
        None => {
            return degenerate_constant(
                &a,
                action,
                depth,
                format!("no stable approximation of the complement within {budget}"),
                log,
            );
        }
    };
    let mut m_current = None;
    for m in 1..=depth {
        let overlap = action
            .thicken(&d_one, m)?
            .intersect(&action.thicken(&d_zero, m)?)?;
        if overlap.is_empty() {
            m_current = Some(m);
            break;
        }
    }
    let Some(mut m_current) = m_current else {
        return degenerate_constant(
            &a,
            action,
            depth,
            "collars of the two core sets overlap at every scale".into(),
            log,
        );
    };

    let mut levels = vec![
        LevelSet {
            value: Rat::zero(),
            set: d_zero,
        },
        LevelSet {
            value: Rat::one(),
            set: d_one,
        },
    ];
    let mut pairs = vec![Pair {
        lo: 0,
        hi: 1,
        arena: DyadicSet::full(resolution)?,
        alive: true,
    }];
    // certificate rows: (m_k, 2^-(k-1)) per the tree-level bound; the
    // level-0 scale only carries the trivial bound 1
    let mut rows = vec![CertificateRow {
        m: m_current,
        osc: Rat::one(),
    }];

    for stage in 1.. {
        if pairs.iter().all(|p| !p.alive) {
            break;
        }
        // refine every live pair inside its arena
        let mut new_pairs = Vec::new();
        let mut inserted_any = false;
        for pair in pairs.iter_mut() {
            if !pair.alive {
                continue;
            }
            let lo_set = levels[pair.lo].set.clone();
            let hi_set = levels[pair.hi].set.clone();
            let mid_value =
                (levels[pair.lo].value.clone() + levels[pair.hi].value.clone()) / rat(2, 1);
            let collar_lo = action.thicken(&lo_set, m_current)?;
            let collar_hi = action.thicken(&hi_set, m_current)?;
            let strait = pair.arena.minus(&collar_lo.union(&collar_hi)?)?;
            if strait.is_empty() {
                pair.alive = false;
                log.push(format!(
                    "branch ({}, {}) closed: no room between collars",
                    levels[pair.lo].value, levels[pair.hi].value
                ));
                continue;
            }
            let mid = tilde_closure(&strait, action, depth)?;
            let escapes = !mid.is_subset_of(&pair.arena)?
                || levels
                    .iter()
                    .any(|l| !l.set.is_disjoint_from(&mid).expect("aligned resolutions"));
            if escapes {
                pair.alive = false;
                log.push(format!(
                    "branch ({}, {}) closed: stable hull of the gap collides",
                    levels[pair.lo].value, levels[pair.hi].value
                ));
                continue;
            }
            let mid_idx = levels.len();
            levels.push(LevelSet {
                value: mid_value,
                set: mid.clone(),
            });
            inserted_any = true;
            let lower_arena = pair.arena.intersect(&collar_lo)?.union(&mid)?;
            let upper_arena = pair.arena.intersect(&collar_hi)?.union(&mid)?;
            new_pairs.push(Pair {
                lo: pair.lo,
                hi: mid_idx,
                arena: lower_arena,
                alive: true,
            });
            new_pairs.push(Pair {
                lo: mid_idx,
                hi: pair.hi,
                arena: upper_arena,
                alive: true,
            });
            pair.alive = false; // replaced by its children
        }
        pairs.retain(|p| !p.alive); // keep only closed branches (dead arenas)
        let closed: Vec<Pair> = std::mem::take(&mut pairs);
        pairs = new_pairs;
        pairs.extend(closed);
        if !inserted_any {
            break;
        }

        // escalate the scale: smallest m > m_current + 2 with small
        // total collar mass, pairwise disjoint collars, and collars
        // that stay clear of foreign arenas
        let target_mass = pow2_inv(stage as u32);
        let mut next_m = None;
        'scale: for m in m_current + 3..=depth {
            let collars: Vec<DyadicSet> = levels
                .iter()
                .map(|l| action.thicken(&l.set, m))
                .collect::<Result<_>>()?;
            let mut total = Rat::zero();
            for (l, c) in levels.iter().zip(&collars) {
                total += c.minus(&l.set)?.measure();
            }
            if total >= target_mass {
                continue;
            }
            for i in 0..collars.len() {
                for j in i + 1..collars.len() {
                    if !collars[i].is_disjoint_from(&collars[j])? {
                        continue 'scale;
                    }
                }
            }
            for (idx, c) in collars.iter().enumerate() {
                for pair in &pairs {
                    if pair.lo != idx && pair.hi != idx && !c.is_disjoint_from(&pair.arena)? {
                        continue 'scale;
                    }
                }
            }
            next_m = Some(m);
            break;
        }
        match next_m {
            Some(m) => {
                m_current = m;
                rows.push(CertificateRow {
                    m,
                    osc: pow2_inv(stage as u32 - 1),
                });
            }
            None => {
                log.push(format!(
                    "scale ladder exhausted after stage {stage}; partial tree kept"
                ));
                break;
            }
        }
    }

    // assemble f: value on each level set, collar values at the final
    // scale, arena midpoints on whatever is left
    let cells = 1usize << resolution;
    let mut values: Vec<Option<Rat>> = vec![None; cells];
    let mut covered = DyadicSet::empty(resolution)?;
    for l in &levels {
        for c in l.set.iter_cells() {
            values[c] = Some(l.value.clone());
        }
        covered = covered.union(&l.set)?;
    }
    let coverage = covered.measure();
    for l in &levels {
        let collar = action.thicken(&l.set, m_current)?;
        for c in collar.iter_cells() {
            if values[c].is_none() {
                values[c] = Some(l.value.clone());
            }
        }
    }
    for pair in &pairs {
        let mid = (levels[pair.lo].value.clone() + levels[pair.hi].value.clone()) / rat(2, 1);
        for c in pair.arena.iter_cells() {
            if values[c].is_none() {
                values[c] = Some(mid.clone());
            }
        }
    }
    let values: Vec<Rat> = values
        .into_iter()
        .map(|v| v.unwrap_or_else(|| rat(1, 2)))
        .collect();
    let f = StepFunction::new(resolution, values)?;
    finalize(f, &a, action, depth, rows, None, coverage, log)
}

/// Largest-effort stable subset of `target` losing less than `budget`:
/// the target itself when already stable, otherwise the stable hull of
/// an erosion `(U_m target^c)^c` for the deepest scale that fits.
fn stable_core(
    target: &DyadicSet,
    budget: &Rat,
    action: &ActionTruncation,
    depth: u32,
) -> Result<Option<DyadicSet>> {
    if is_stable(target, action, depth)?.stable {
        return Ok(Some(target.clone()));
    }
    for m in 1..=depth {
        let eroded = action.thicken(&target.complement(), m)?.complement();
        if eroded.is_empty() {
            continue;
        }
        let hull = tilde_closure(&eroded, action, depth)?;
        if !hull.is_subset_of(target)? {
            continue;
        }
        if &target.minus(&hull)?.measure() < budget {
            return Ok(Some(hull));
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn finalize(
    f: StepFunction,
    a: &DyadicSet,
    action: &ActionTruncation,
    depth: u32,
    rows: Vec<CertificateRow>,
    degenerate: Option<String>,
    coverage: Rat,
    mut log: Vec<String>,
) -> Result<UrysohnOutput> {
    let _ = depth;
    // verify every certificate row exactly; drop rows that fail and log
    let mut kept = Vec::new();
    for row in rows {
        let mut ok = true;
        for (label, p, _) in action.sublist(row.m)? {
            let moved = p.koopman(&f)?;
            if moved.linf_dist(&f)? > row.osc {
                log.push(format!(
                    "certificate row m={} dropped: element {label} oscillates past {}",
                    row.m, row.osc
                ));
                ok = false;
                break;
            }
        }
        if ok {
            kept.push(row);
        }
    }
    let l2_error_sq = f.l2_dist_sq(&StepFunction::indicator(a))?;
    Ok(UrysohnOutput {
        f,
        certificate: ContinuityCertificate { rows: kept },
        l2_error_sq,
        coverage,
        degenerate,
        termination_log: log,
    })
}

fn degenerate_constant(
    a: &DyadicSet,
    action: &ActionTruncation,
    depth: u32,
    reason: String,
    mut log: Vec<String>,
) -> Result<UrysohnOutput> {
    log.push(format!("degenerate: {reason}"));
    let f = StepFunction::constant(action.resolution(), a.measure())?;
    finalize(
        f,
        a,
        action,
        depth,
        Vec::new(),
        Some(reason),
        Rat::zero(),
        log,
    )
}
