//! Free protocols: the superoperations players may apply to a shared
//! programmable instrument without creating incompatibility.
//!
//! One round runs left to right as
//!
//! ```text
//!   C --pre(w)--> A (x) M --resource program i, outcome x--> B (x) M
//!     --post[w][b], outcome z--> D
//! ```
//!
//! Player I applies the pre-processing instrument, forwards its outcome `w`
//! and keeps the memory `M`. Player II learns the game program `j`, picks
//! the resource program `i`, sees the resource outcome `x`, announces a
//! guess and sends the backward message `b`; player I then repairs `B (x) M`
//! into the game output `D`. In the `c` framework there is no backward
//! message; in `c` and `q` the repair is a channel and every guess is
//! announced by player II; in `ex` the repair is an instrument whose
//! outcome may serve as the guess for designated programs.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::Framework;
use crate::qobjects::{CpMap, Instrument, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::SystemLabel;

/// Who announces the guess for one game program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuessSource {
    /// Player II announces; the guess is drawn by the classical
    /// post-processing.
    PlayerII,
    /// Player I announces; the guess is the repair instrument's outcome.
    PlayerI,
}

/// A free superoperation on programmable instruments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeProtocol {
    pub framework: Framework,
    /// Player I's pre-processing instrument `C -> A (x) M` with outcome `w`.
    /// Its output list must end with `memory`; the prefix feeds the
    /// resource.
    pub pre: Instrument,
    /// Systems kept by player I between pre- and post-processing.
    pub memory: Vec<SystemLabel>,
    /// Player II's program choice and working memory: `(i, r) | (j, w)`,
    /// flattened `i * n_ii_memory + r`.
    pub choose: StochasticMatrix,
    pub n_ii_memory: usize,
    /// Player II's announcement and backward message:
    /// `(y, b) | (j, w, i, x, r)`, flattened `y * n_backward + b`.
    pub announce: StochasticMatrix,
    pub n_backward: usize,
    /// Player I's repair per forward/backward message pair:
    /// `post[w][b] : B (x) M -> D`.
    pub post: Vec<Vec<Instrument>>,
    /// Guess source per game program.
    pub guess: Vec<GuessSource>,
}

impl FreeProtocol {
    pub fn n_programs(&self) -> usize {
        self.choose.cond_dims[0]
    }

    pub fn n_forward(&self) -> usize {
        self.pre.n_outcomes()
    }

    pub fn n_resource_programs(&self) -> usize {
        self.choose.out_dim / self.n_ii_memory
    }

    pub fn n_resource_outcomes(&self) -> usize {
        self.announce.cond_dims[3]
    }

    /// Guess alphabet size.
    pub fn n_outcomes(&self) -> usize {
        self.announce.out_dim / self.n_backward
    }

    /// Repair outcome count (1 for `c`/`q` protocols).
    pub fn n_repair_outcomes(&self) -> usize {
        self.post[0][0].n_outcomes()
    }

    pub fn game_inputs(&self) -> &[SystemLabel] {
        self.pre.inputs()
    }

    pub fn game_outputs(&self) -> &[SystemLabel] {
        self.post[0][0].outputs()
    }

    /// Systems fed into the resource: the pre-processing outputs minus the
    /// memory suffix.
    pub fn resource_inputs(&self) -> &[SystemLabel] {
        let outs = self.pre.outputs();
        &outs[..outs.len() - self.memory.len()]
    }

    /// Systems the resource must output: the repair inputs minus the memory
    /// suffix.
    pub fn resource_outputs(&self) -> &[SystemLabel] {
        let ins = self.post[0][0].inputs();
        &ins[..ins.len() - self.memory.len()]
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let n_w = self.n_forward();
        let pre_outs = self.pre.outputs();
        if pre_outs.len() < self.memory.len()
            || pre_outs[pre_outs.len() - self.memory.len()..] != self.memory[..]
        {
            return Err(Error::InvalidProtocol(
                "pre-processing outputs must end with the memory systems".into(),
            ));
        }
        self.pre.validate(tol)?;

        if self.choose.cond_dims.len() != 2 || self.choose.cond_dims[1] != n_w {
            return Err(Error::InvalidProtocol(format!(
                "program choice conditions {:?} do not match (programs, {n_w} forward messages)",
                self.choose.cond_dims
            )));
        }
        if self.n_ii_memory == 0 || self.choose.out_dim % self.n_ii_memory != 0 {
            return Err(Error::InvalidProtocol(
                "program-choice output does not factor into (resource program, working memory)"
                    .into(),
            ));
        }
        let n_j = self.n_programs();
        let n_i = self.n_resource_programs();
        let want = vec![
            n_j,
            n_w,
            n_i,
            self.n_resource_outcomes(),
            self.n_ii_memory,
        ];
        if self.announce.cond_dims != want {
            return Err(Error::InvalidProtocol(format!(
                "announcement conditions {:?} do not match {:?}",
                self.announce.cond_dims, want
            )));
        }
        if self.n_backward == 0 || self.announce.out_dim % self.n_backward != 0 {
            return Err(Error::InvalidProtocol(
                "announcement output does not factor into (guess, backward message)".into(),
            ));
        }

        if self.post.len() != n_w || self.post.iter().any(|row| row.len() != self.n_backward) {
            return Err(Error::InvalidProtocol(format!(
                "repair grid is {}x{:?}, expected {}x{}",
                self.post.len(),
                self.post.first().map(|r| r.len()),
                n_w,
                self.n_backward
            )));
        }
        let first = &self.post[0][0];
        let post_ins = first.inputs();
        if post_ins.len() < self.memory.len()
            || post_ins[post_ins.len() - self.memory.len()..] != self.memory[..]
        {
            return Err(Error::InvalidProtocol(
                "repair inputs must end with the memory systems".into(),
            ));
        }
        for row in &self.post {
            for inst in row {
                if inst.inputs() != post_ins || inst.outputs() != first.outputs() {
                    return Err(Error::InvalidProtocol(
                        "repair instruments disagree on systems".into(),
                    ));
                }
                if inst.n_outcomes() != first.n_outcomes() {
                    return Err(Error::InvalidProtocol(
                        "repair instruments disagree on outcome counts".into(),
                    ));
                }
                inst.validate(tol)?;
            }
        }

        if self.guess.len() != n_j {
            return Err(Error::InvalidProtocol(format!(
                "{} guess sources for {} programs",
                self.guess.len(),
                n_j
            )));
        }
        let any_i = self.guess.iter().any(|g| *g == GuessSource::PlayerI);
        match self.framework {
            Framework::C => {
                if self.n_backward != 1 {
                    return Err(Error::InvalidProtocol(
                        "framework c admits no backward message".into(),
                    ));
                }
                if any_i || first.n_outcomes() != 1 {
                    return Err(Error::InvalidProtocol(
                        "framework c repairs are channels and player II announces".into(),
                    ));
                }
            }
            Framework::Q => {
                if any_i || first.n_outcomes() != 1 {
                    return Err(Error::InvalidProtocol(
                        "framework q repairs are channels and player II announces".into(),
                    ));
                }
            }
            Framework::Ex => {
                if any_i && first.n_outcomes() != self.n_outcomes() {
                    return Err(Error::InvalidProtocol(
                        "player-I guesses need repair outcomes matching the guess alphabet"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Identity map between equal-dimension system lists with different labels.
pub(crate) fn relabeled_identity(from: &[SystemLabel], to: &[SystemLabel]) -> Result<CpMap> {
    if from.len() != to.len() || from.iter().zip(to).any(|(a, b)| a.dim != b.dim) {
        return Err(Error::shape("relabeled identity needs matching dimensions"));
    }
    let id = CpMap::identity(to.to_vec())?;
    let mut choi = id.choi;
    for (f, t) in from.iter().zip(to.iter()) {
        if f.name != t.name {
            choi.rename_system(&format!("{}@in", t.name), &format!("{}@in", f.name))?;
        }
    }
    CpMap::new(from.to_vec(), to.to_vec(), choi)
}

/// Fresh system labels avoiding every name in `taken`.
pub(crate) fn fresh_labels(taken: &HashSet<String>, base: &str, dims: &[usize]) -> Vec<SystemLabel> {
    let mut out = Vec::with_capacity(dims.len());
    let mut k = 0usize;
    for &d in dims {
        loop {
            let name = format!("{base}{k}");
            k += 1;
            if !taken.contains(&name) && !out.iter().any(|s: &SystemLabel| s.name == name) {
                out.push(SystemLabel::new(name, d));
                break;
            }
        }
    }
    out
}

/// Applies a free protocol to a resource, producing the composite
/// programmable instrument seen by the referee.
///
/// Shapes are checked structurally: the resource must have uniform outputs
/// matching the repair inputs, inputs matching the pre-processing outputs,
/// and program/outcome counts matching the protocol's classical tables.
pub fn apply_protocol(
    t: &FreeProtocol,
    pi: &ProgrammableInstrument,
) -> Result<ProgrammableInstrument> {
    let res_out = pi.uniform_outputs().ok_or_else(|| {
        Error::shape("free protocols need a resource with a common output system")
    })?;
    if pi.inputs() != t.resource_inputs() {
        return Err(Error::shape(format!(
            "resource inputs {:?} do not match the protocol's {:?}",
            pi.inputs().iter().map(|s| &s.name).collect::<Vec<_>>(),
            t.resource_inputs()
                .iter()
                .map(|s| &s.name)
                .collect::<Vec<_>>()
        )));
    }
    if res_out != t.resource_outputs() {
        return Err(Error::shape(format!(
            "resource outputs {:?} do not match the protocol's {:?}",
            res_out.iter().map(|s| &s.name).collect::<Vec<_>>(),
            t.resource_outputs()
                .iter()
                .map(|s| &s.name)
                .collect::<Vec<_>>()
        )));
    }
    if pi.n_programs() != t.n_resource_programs() {
        return Err(Error::shape(format!(
            "resource has {} programs, protocol expects {}",
            pi.n_programs(),
            t.n_resource_programs()
        )));
    }
    if pi.max_outcomes() != t.n_resource_outcomes() {
        return Err(Error::shape(format!(
            "resource has up to {} outcomes, protocol expects {}",
            pi.max_outcomes(),
            t.n_resource_outcomes()
        )));
    }

    let n_j = t.n_programs();
    let n_y = t.n_outcomes();
    let n_w = t.n_forward();
    let n_b = t.n_backward;
    let n_z = t.n_repair_outcomes();
    let n_r = t.n_ii_memory;
    let eps = 1e-15;

    let id_mem = if t.memory.is_empty() {
        None
    } else {
        Some(CpMap::identity(t.memory.clone())?)
    };

    // acc[j][y] accumulates the composite Choi for program j, guess y.
    let mut acc: Vec<Vec<Option<CpMap>>> = vec![vec![None; n_y]; n_j];

    for w in 0..n_w {
        for (i, inst) in pi.instruments.iter().enumerate() {
            for (x, rmap) in inst.maps.iter().enumerate() {
                let ext = match &id_mem {
                    Some(id) => rmap.tensor(id)?,
                    None => rmap.clone(),
                };
                let base = CpMap::compose(&ext, &t.pre.maps[w])?;
                for b in 0..n_b {
                    for z in 0..n_z {
                        // weight[j][y]: probability mass routing this branch
                        // to program j with final guess y.
                        let mut weights = vec![vec![0.0f64; n_y]; n_j];
                        let mut total = 0.0;
                        for j in 0..n_j {
                            for r in 0..n_r {
                                let p_ir = t.choose.get(i * n_r + r, &[j, w]);
                                if p_ir <= eps {
                                    continue;
                                }
                                match t.guess[j] {
                                    GuessSource::PlayerII => {
                                        for y in 0..n_y {
                                            let p =
                                                t.announce.get(y * n_b + b, &[j, w, i, x, r]);
                                            if p > eps {
                                                weights[j][y] += p_ir * p;
                                                total += p_ir * p;
                                            }
                                        }
                                    }
                                    GuessSource::PlayerI => {
                                        let mut pb = 0.0;
                                        for y2 in 0..n_y {
                                            pb += t.announce.get(y2 * n_b + b, &[j, w, i, x, r]);
                                        }
                                        if pb > eps && z < n_y {
                                            weights[j][z] += p_ir * pb;
                                            total += p_ir * pb;
                                        }
                                    }
                                }
                            }
                        }
                        if total <= eps {
                            continue;
                        }
                        let full = CpMap::compose(&t.post[w][b].maps[z], &base)?;
                        for j in 0..n_j {
                            for y in 0..n_y {
                                let wt = weights[j][y];
                                if wt <= eps {
                                    continue;
                                }
                                acc[j][y] = Some(match &acc[j][y] {
                                    Some(a) => a.add_scaled(&full, wt)?,
                                    None => full.scale(wt),
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let zero_template = CpMap::compose(
        &t.post[0][0].maps[0],
        &CpMap::compose(
            &match &id_mem {
                Some(id) => pi.instruments[0].maps[0].tensor(id)?,
                None => pi.instruments[0].maps[0].clone(),
            },
            &t.pre.maps[0],
        )?,
    )?
    .scale(0.0);

    let mut programs = Vec::with_capacity(n_j);
    let mut instruments = Vec::with_capacity(n_j);
    for (j, row) in acc.into_iter().enumerate() {
        let maps: Vec<CpMap> = row
            .into_iter()
            .map(|m| m.unwrap_or_else(|| zero_template.clone()))
            .collect();
        let outcomes = (0..n_y).map(|y| format!("y{y}")).collect();
        programs.push(format!("g{j}"));
        instruments.push(Instrument::new(outcomes, maps)?);
    }
    ProgrammableInstrument::new(programs, instruments)
}

/// The neutral protocol for a given resource shape: route the game input
/// into the resource, pick the resource program matching the game program,
/// announce the resource outcome, return the resource output.
pub fn identity_protocol(pi: &ProgrammableInstrument, framework: Framework) -> Result<FreeProtocol> {
    let res_out = pi
        .uniform_outputs()
        .ok_or_else(|| Error::shape("identity protocol needs uniform resource outputs"))?
        .to_vec();
    let taken: HashSet<String> = pi
        .inputs()
        .iter()
        .chain(res_out.iter())
        .map(|s| s.name.clone())
        .collect();
    let mem = fresh_labels(&taken, "mem", &[1]);
    let n_i = pi.n_programs();
    let n_x = pi.max_outcomes();

    let mem_state = crate::tensor::HermitianBlock::identity(mem.clone());
    let pre_map = CpMap::identity(pi.inputs().to_vec())?
        .tensor(&CpMap::prepare(vec![], &mem_state)?)?;
    let pre = Instrument::from_channel(pre_map);

    let choose = StochasticMatrix::deterministic(n_i, vec![n_i, 1], |c| c[0])?;
    let announce = StochasticMatrix::deterministic(n_x, vec![n_i, 1, n_i, n_x, 1], |c| c[3])?;

    let post_map = CpMap::identity(res_out.clone())?.tensor(&CpMap::discard(mem.clone())?)?;
    let post = vec![vec![Instrument::from_channel(post_map)]];

    Ok(FreeProtocol {
        framework,
        pre,
        memory: mem,
        choose,
        n_ii_memory: 1,
        announce,
        n_backward: 1,
        post,
        guess: vec![GuessSource::PlayerII; n_i],
    })
}

/// Renames the memory systems of a protocol (inside every pre and post
/// Choi block) to the given fresh labels.
fn rename_memory(p: &FreeProtocol, fresh: &[SystemLabel]) -> Result<FreeProtocol> {
    if fresh.len() != p.memory.len()
        || fresh.iter().zip(&p.memory).any(|(a, b)| a.dim != b.dim)
    {
        return Err(Error::shape("memory renaming must preserve dimensions"));
    }
    let mut out = p.clone();
    out.memory = fresh.to_vec();

    let resource_part: Vec<SystemLabel> = p.resource_inputs().to_vec();
    let mut pre_maps = Vec::with_capacity(p.pre.maps.len());
    for m in &p.pre.maps {
        let mut choi = m.choi.clone();
        for (old, new) in p.memory.iter().zip(fresh.iter()) {
            if old.name != new.name {
                choi.rename_system(&old.name, &new.name)?;
            }
        }
        let mut outs = resource_part.clone();
        outs.extend(fresh.iter().cloned());
        pre_maps.push(CpMap::new(m.inputs.clone(), outs, choi)?);
    }
    out.pre = Instrument::new(p.pre.outcomes.clone(), pre_maps)?;

    let b_part: Vec<SystemLabel> = p.resource_outputs().to_vec();
    let mut post = Vec::with_capacity(p.post.len());
    for row in &p.post {
        let mut new_row = Vec::with_capacity(row.len());
        for inst in row {
            let mut maps = Vec::with_capacity(inst.maps.len());
            for m in &inst.maps {
                let mut choi = m.choi.clone();
                for (old, new) in p.memory.iter().zip(fresh.iter()) {
                    if old.name != new.name {
                        choi.rename_system(
                            &format!("{}@in", old.name),
                            &format!("{}@in", new.name),
                        )?;
                    }
                }
                let mut ins = b_part.clone();
                ins.extend(fresh.iter().cloned());
                maps.push(CpMap::new(ins, m.outputs.clone(), choi)?);
            }
            new_row.push(Instrument::new(inst.outcomes.clone(), maps)?);
        }
        post.push(new_row);
    }
    out.post = post;
    Ok(out)
}

/// Chains two protocols of the same framework: applying the result equals
/// applying `inner` first and `outer` to what comes out.
///
/// In the `ex` framework the inner protocol must be `q`-shaped (channels
/// as repairs, player II announcing): an outer protocol conditions its
/// classical processing on the inner announcement, which player II only
/// holds in that case.
pub fn compose_protocols(outer: &FreeProtocol, inner: &FreeProtocol) -> Result<FreeProtocol> {
    if outer.framework != inner.framework {
        return Err(Error::InvalidProtocol(
            "protocol composition needs matching frameworks".into(),
        ));
    }
    if outer.framework == Framework::Ex
        && (inner.n_repair_outcomes() != 1
            || inner.guess.iter().any(|g| *g == GuessSource::PlayerI))
    {
        return Err(Error::InvalidProtocol(
            "ex composition needs a q-shaped inner protocol".into(),
        ));
    }
    if outer.resource_inputs() != inner.game_inputs() {
        return Err(Error::InvalidProtocol(
            "outer resource inputs must match the inner game inputs".into(),
        ));
    }
    if outer.resource_outputs() != inner.game_outputs() {
        return Err(Error::InvalidProtocol(
            "outer resource outputs must match the inner game outputs".into(),
        ));
    }
    if outer.n_resource_programs() != inner.n_programs()
        || outer.n_resource_outcomes() != inner.n_outcomes()
    {
        return Err(Error::InvalidProtocol(
            "outer classical shapes must match the inner program/outcome counts".into(),
        ));
    }

    // Rename the outer memory away from anything the inner protocol touches.
    let mut taken: HashSet<String> = HashSet::new();
    for s in inner
        .memory
        .iter()
        .chain(inner.game_inputs())
        .chain(inner.resource_inputs())
        .chain(inner.resource_outputs())
        .chain(inner.game_outputs())
        .chain(outer.game_inputs())
        .chain(outer.game_outputs())
    {
        taken.insert(s.name.clone());
    }
    let fresh: Vec<usize> = outer.memory.iter().map(|s| s.dim).collect();
    let outer = rename_memory(outer, &fresh_labels(&taken, "mx", &fresh))?;

    let (n_j, n_wo, n_wn) = (
        outer.n_programs(),
        outer.n_forward(),
        inner.n_forward(),
    );
    let (n_jn, n_ro, n_rn) = (
        inner.n_programs(),
        outer.n_ii_memory,
        inner.n_ii_memory,
    );
    let (n_bo, n_bn) = (outer.n_backward, inner.n_backward);
    let (n_i, n_x) = (
        inner.n_resource_programs(),
        inner.n_resource_outcomes(),
    );
    let (n_y, n_yn) = (outer.n_outcomes(), inner.n_outcomes());
    let n_w = n_wo * n_wn;
    let n_b = n_bo * n_bn;
    let n_r = n_jn * n_ro * n_rn;

    let id_mo = CpMap::identity(outer.memory.clone())?;

    // pre: (inner pre (x) id on outer memory) after outer pre.
    let mut pre_maps = Vec::with_capacity(n_w);
    let mut pre_names = Vec::with_capacity(n_w);
    for wo in 0..n_wo {
        for wn in 0..n_wn {
            let lifted = inner.pre.maps[wn].tensor(&id_mo)?;
            pre_maps.push(CpMap::compose(&lifted, &outer.pre.maps[wo])?);
            pre_names.push(format!("w{wo}.{wn}"));
        }
    }
    let pre = Instrument::new(pre_names, pre_maps)?;
    let mut memory = inner.memory.clone();
    memory.extend(outer.memory.iter().cloned());

    // choose: sample j' and r_o from the outer table, then i and r_n from
    // the inner one; the working memory records (j', r_o, r_n).
    let mut choose_p = vec![0.0f64; n_j * n_w * n_i * n_r];
    for j in 0..n_j {
        for wo in 0..n_wo {
            for wn in 0..n_wn {
                let w = wo * n_wn + wn;
                let row = (j * n_w + w) * n_i * n_r;
                for jp in 0..n_jn {
                    for ro in 0..n_ro {
                        let p_o = outer.choose.get(jp * n_ro + ro, &[j, wo]);
                        if p_o == 0.0 {
                            continue;
                        }
                        for i in 0..n_i {
                            for rn in 0..n_rn {
                                let p_n = inner.choose.get(i * n_rn + rn, &[jp, wn]);
                                if p_n == 0.0 {
                                    continue;
                                }
                                let r = (jp * n_ro + ro) * n_rn + rn;
                                choose_p[row + i * n_r + r] += p_o * p_n;
                            }
                        }
                    }
                }
            }
        }
    }
    let choose = StochasticMatrix::new(n_i * n_r, vec![n_j, n_w], choose_p, 1e-9)?;

    // announce: the inner announcement feeds the outer one as its resource
    // outcome.
    let mut ann_p = vec![0.0f64; n_j * n_w * n_i * n_x * n_r * n_y * n_b];
    for j in 0..n_j {
        for wo in 0..n_wo {
            for wn in 0..n_wn {
                let w = wo * n_wn + wn;
                for i in 0..n_i {
                    for x in 0..n_x {
                        for jp in 0..n_jn {
                            for ro in 0..n_ro {
                                for rn in 0..n_rn {
                                    let r = (jp * n_ro + ro) * n_rn + rn;
                                    let row = ((((j * n_w + w) * n_i + i) * n_x + x) * n_r + r)
                                        * n_y
                                        * n_b;
                                    for yn in 0..n_yn {
                                        for bn in 0..n_bn {
                                            let p_n = inner
                                                .announce
                                                .get(yn * n_bn + bn, &[jp, wn, i, x, rn]);
                                            if p_n == 0.0 {
                                                continue;
                                            }
                                            for y in 0..n_y {
                                                for bo in 0..n_bo {
                                                    let p_o = outer.announce.get(
                                                        y * n_bo + bo,
                                                        &[j, wo, jp, yn, ro],
                                                    );
                                                    if p_o == 0.0 {
                                                        continue;
                                                    }
                                                    ann_p[row
                                                        + y * n_b
                                                        + bo * n_bn
                                                        + bn] += p_n * p_o;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let announce =
        StochasticMatrix::new(n_y * n_b, vec![n_j, n_w, n_i, n_x, n_r], ann_p, 1e-9)?;

    // post: inner repair (on B (x) M_n, carrying M_o along) then outer
    // repair.
    let mut post = Vec::with_capacity(n_w);
    for wo in 0..n_wo {
        for wn in 0..n_wn {
            let mut row = Vec::with_capacity(n_b);
            for bo in 0..n_bo {
                for bn in 0..n_bn {
                    let inner_lift = inner.post[wn][bn].maps[0].tensor(&id_mo)?;
                    let outer_inst = &outer.post[wo][bo];
                    let mut maps = Vec::with_capacity(outer_inst.maps.len());
                    for zo in &outer_inst.maps {
                        maps.push(CpMap::compose(zo, &inner_lift)?);
                    }
                    row.push(Instrument::new(outer_inst.outcomes.clone(), maps)?);
                }
            }
            post.push(row);
        }
    }

    let out = FreeProtocol {
        framework: outer.framework,
        pre,
        memory,
        choose,
        n_ii_memory: n_r,
        announce,
        n_backward: n_b,
        post,
        guess: outer.guess.clone(),
    };
    Ok(out)
}

/// Convex mixture of two protocols through shared classical randomness:
/// player I flips a biased coin, runs the chosen protocol and the coin
/// value rides on the forward message.
pub fn mix_protocols(a: &FreeProtocol, b: &FreeProtocol, weight: f64) -> Result<FreeProtocol> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid("mixture", "weight must lie in [0, 1]"));
    }
    if a.framework != b.framework {
        return Err(Error::InvalidProtocol(
            "mixed protocols must share a framework".into(),
        ));
    }
    if a.guess != b.guess {
        return Err(Error::InvalidProtocol(
            "mixed protocols must agree on guess sources".into(),
        ));
    }
    if a.memory != b.memory
        || a.pre.inputs() != b.pre.inputs()
        || a.pre.outputs() != b.pre.outputs()
        || a.post[0][0].inputs() != b.post[0][0].inputs()
        || a.post[0][0].outputs() != b.post[0][0].outputs()
    {
        return Err(Error::InvalidProtocol(
            "mixed protocols must share wiring and memory labels".into(),
        ));
    }
    if a.n_programs() != b.n_programs()
        || a.n_resource_programs() != b.n_resource_programs()
        || a.n_resource_outcomes() != b.n_resource_outcomes()
        || a.n_outcomes() != b.n_outcomes()
        || a.n_repair_outcomes() != b.n_repair_outcomes()
    {
        return Err(Error::InvalidProtocol(
            "mixed protocols must share classical shapes".into(),
        ));
    }

    let (n_wa, n_wb) = (a.n_forward(), b.n_forward());
    let n_w = n_wa + n_wb;
    let n_r = a.n_ii_memory.max(b.n_ii_memory);
    let n_b = a.n_backward.max(b.n_backward);
    let (n_j, n_i, n_x, n_y) = (
        a.n_programs(),
        a.n_resource_programs(),
        a.n_resource_outcomes(),
        a.n_outcomes(),
    );

    let mut pre_maps = Vec::with_capacity(n_w);
    let mut pre_names = Vec::with_capacity(n_w);
    for (k, m) in a.pre.maps.iter().enumerate() {
        pre_maps.push(m.scale(weight));
        pre_names.push(format!("a{k}"));
    }
    for (k, m) in b.pre.maps.iter().enumerate() {
        pre_maps.push(m.scale(1.0 - weight));
        pre_names.push(format!("b{k}"));
    }
    let pre = Instrument::new(pre_names, pre_maps)?;

    let side = |w: usize| -> (&FreeProtocol, usize) {
        if w < n_wa {
            (a, w)
        } else {
            (b, w - n_wa)
        }
    };

    let mut choose_p = vec![0.0f64; n_j * n_w * n_i * n_r];
    for j in 0..n_j {
        for w in 0..n_w {
            let (p, ws) = side(w);
            let row = (j * n_w + w) * n_i * n_r;
            for i in 0..n_i {
                for r in 0..p.n_ii_memory {
                    choose_p[row + i * n_r + r] = p.choose.get(i * p.n_ii_memory + r, &[j, ws]);
                }
            }
        }
    }
    let choose = StochasticMatrix::new(n_i * n_r, vec![n_j, n_w], choose_p, 1e-9)?;

    let mut ann_p = vec![0.0f64; n_j * n_w * n_i * n_x * n_r * n_y * n_b];
    for j in 0..n_j {
        for w in 0..n_w {
            let (p, ws) = side(w);
            for i in 0..n_i {
                for x in 0..n_x {
                    for r in 0..n_r {
                        let row =
                            ((((j * n_w + w) * n_i + i) * n_x + x) * n_r + r) * n_y * n_b;
                        if r < p.n_ii_memory {
                            for y in 0..n_y {
                                for bb in 0..p.n_backward {
                                    ann_p[row + y * n_b + bb] =
                                        p.announce.get(y * p.n_backward + bb, &[j, ws, i, x, r]);
                                }
                            }
                        } else {
                            // unreachable working-memory value: any valid row
                            ann_p[row] = 1.0;
                        }
                    }
                }
            }
        }
    }
    let announce =
        StochasticMatrix::new(n_y * n_b, vec![n_j, n_w, n_i, n_x, n_r], ann_p, 1e-9)?;

    let mut post = Vec::with_capacity(n_w);
    for w in 0..n_w {
        let (p, ws) = side(w);
        let mut row = Vec::with_capacity(n_b);
        for bb in 0..n_b {
            let src = bb.min(p.n_backward - 1);
            row.push(p.post[ws][src].clone());
        }
        post.push(row);
    }

    Ok(FreeProtocol {
        framework: a.framework,
        pre,
        memory: a.memory.clone(),
        choose,
        n_ii_memory: n_r,
        announce,
        n_backward: n_b,
        post,
        guess: a.guess.clone(),
    })
}
