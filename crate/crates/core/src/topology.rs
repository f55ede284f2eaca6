//! System graphs: bodies, fixed anchors and the holonomic constraints between them.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mechanics::{body_axis_coefficients, body_point_coefficients, BodyKind, BodySpec};

/// One end of a distance constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    /// Global point index.
    Point(usize),
    Anchor(usize),
}

/// The second participant of a joint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointTarget {
    Body(usize),
    Anchor(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    /// `‖x_a − x_b‖² − ℓ²`.
    Link { a: Endpoint, b: Endpoint, length: f64 },
    /// `X_A c̃ᴬ − X_B c̃ᴮ` (or minus the anchor position).
    Joint {
        a: usize,
        b: JointTarget,
        ca: Vec<f64>,
        cb: Vec<f64>,
    },
    /// `X_A Δuᴬ − X_B Δuᴮ`: a body-frame direction shared by two bodies.
    Axis {
        a: usize,
        b: usize,
        ua: Vec<f64>,
        ub: Vec<f64>,
    },
    /// Distance between two points of one extended body (local point indices).
    Rigidity {
        body: usize,
        i: usize,
        j: usize,
        length: f64,
    },
}

impl Constraint {
    pub fn arity(&self, d: usize) -> usize {
        match self {
            Constraint::Link { .. } | Constraint::Rigidity { .. } => 1,
            Constraint::Joint { .. } | Constraint::Axis { .. } => d,
        }
    }
}

/// A single scalar constraint row in terms of global point indices.
#[derive(Clone, Debug, PartialEq)]
pub enum Row {
    /// `‖x_i − y‖² − ℓ²` with `y` a point or a fixed position.
    Distance {
        i: usize,
        other: RowTarget,
        length_sq: f64,
    },
    /// `Σ coef·x_{k,p} − constant` along spatial axis `k`.
    Linear {
        k: usize,
        terms: Vec<(usize, f64)>,
        constant: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowTarget {
    Point(usize),
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemTopology {
    pub d: usize,
    pub bodies: Vec<BodySpec>,
    pub anchors: Vec<Vec<f64>>,
    pub constraints: Vec<Constraint>,
    pub enabled: Vec<bool>,
    pub gravity_axis: usize,
    pub g: f64,
    offsets: Vec<usize>,
    n: usize,
    rows: Vec<Row>,
}

impl SystemTopology {
    /// Validates the graph and appends rigidity constraints for every extended body.
    pub fn new(
        d: usize,
        bodies: Vec<BodySpec>,
        anchors: Vec<Vec<f64>>,
        declared: Vec<Constraint>,
        gravity_axis: usize,
        g: f64,
    ) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(CoreError::Topology(format!("dimension must be 2 or 3, got {d}")));
        }
        if gravity_axis >= d {
            return Err(CoreError::Topology(format!(
                "gravity axis {gravity_axis} out of range for d = {d}"
            )));
        }
        if bodies.is_empty() {
            return Err(CoreError::Topology("no bodies".into()));
        }
        for b in &bodies {
            b.validate()?;
            if b.kind.moments() > d {
                return Err(CoreError::Topology(format!("{:?} cannot live in {d} dimensions", b.kind)));
            }
        }
        if let Some(a) = anchors.iter().find(|a| a.len() != d) {
            return Err(CoreError::Topology(format!("anchor {a:?} is not {d}-dimensional")));
        }
        let mut offsets = Vec::with_capacity(bodies.len());
        let mut n = 0;
        for b in &bodies {
            offsets.push(n);
            n += b.points();
        }
        let mut constraints = declared;
        for (bi, b) in bodies.iter().enumerate() {
            let k = b.points();
            for i in 0..k {
                for j in i + 1..k {
                    let length = if i == 0 { 1.0 } else { 2f64.sqrt() };
                    constraints.push(Constraint::Rigidity { body: bi, i, j, length });
                }
            }
        }
        let enabled = vec![true; constraints.len()];
        let mut t = Self {
            d,
            bodies,
            anchors,
            constraints,
            enabled,
            gravity_axis,
            g,
            offsets,
            n,
            rows: Vec::new(),
        };
        for c in &t.constraints {
            t.validate_constraint(c)?;
        }
        t.rows = t.compile();
        Ok(t)
    }

    fn validate_constraint(&self, c: &Constraint) -> Result<()> {
        let nb = self.bodies.len();
        let bad = |msg: String| Err(CoreError::Topology(msg));
        let check_end = |e: &Endpoint| match *e {
            Endpoint::Point(p) if p >= self.n => bad(format!("point {p} out of range")),
            Endpoint::Anchor(a) if a >= self.anchors.len() => bad(format!("anchor {a} out of range")),
            _ => Ok(()),
        };
        match c {
            Constraint::Link { a, b, length } => {
                check_end(a)?;
                check_end(b)?;
                if a == b {
                    return bad("link endpoints must differ".into());
                }
                if matches!((a, b), (Endpoint::Anchor(_), Endpoint::Anchor(_))) {
                    return bad("link between two anchors".into());
                }
                if !(*length >= 0.0) {
                    return bad(format!("link length {length} must be non-negative"));
                }
            }
            Constraint::Joint { a, b, ca, cb } => {
                if *a >= nb {
                    return bad(format!("body {a} out of range"));
                }
                if ca.len() != self.bodies[*a].kind.moments() {
                    return bad(format!("joint vector for body {a} has wrong length"));
                }
                match *b {
                    JointTarget::Body(bb) => {
                        if bb >= nb || bb == *a {
                            return bad(format!("invalid joint partner body {bb}"));
                        }
                        if cb.len() != self.bodies[bb].kind.moments() {
                            return bad(format!("joint vector for body {bb} has wrong length"));
                        }
                    }
                    JointTarget::Anchor(an) => {
                        if an >= self.anchors.len() {
                            return bad(format!("anchor {an} out of range"));
                        }
                    }
                }
            }
            Constraint::Axis { a, b, ua, ub } => {
                if *a >= nb || *b >= nb || a == b {
                    return bad("invalid axis bodies".into());
                }
                if ua.len() != self.bodies[*a].kind.moments() || ub.len() != self.bodies[*b].kind.moments() {
                    return bad("axis vectors have wrong length".into());
                }
            }
            Constraint::Rigidity { body, i, j, .. } => {
                if *body >= nb {
                    return bad(format!("body {body} out of range"));
                }
                let k = self.bodies[*body].points();
                if i == j || *i >= k || *j >= k {
                    return bad(format!("rigidity pair ({i}, {j}) invalid for body {body}"));
                }
            }
        }
        Ok(())
    }

    fn compile(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for (c, _) in self.constraints.iter().zip(&self.enabled).filter(|(_, &e)| e) {
            match c {
                Constraint::Link { a, b, length } => {
                    let (i, other) = match (*a, *b) {
                        (Endpoint::Point(i), Endpoint::Point(j)) => (i, RowTarget::Point(j)),
                        (Endpoint::Point(i), Endpoint::Anchor(k)) | (Endpoint::Anchor(k), Endpoint::Point(i)) => {
                            (i, RowTarget::Fixed(self.anchors[k].clone()))
                        }
                        _ => unreachable!("validated"),
                    };
                    rows.push(Row::Distance { i, other, length_sq: length * length });
                }
                Constraint::Rigidity { body, i, j, length } => {
                    let o = self.offsets[*body];
                    rows.push(Row::Distance {
                        i: o + i,
                        other: RowTarget::Point(o + j),
                        length_sq: length * length,
                    });
                }
                Constraint::Joint { a, b, ca, cb } => {
                    let ta = body_point_coefficients(ca);
                    for k in 0..self.d {
                        let mut terms: Vec<(usize, f64)> =
                            ta.iter().enumerate().map(|(p, &w)| (self.offsets[*a] + p, w)).collect();
                        let constant = match *b {
                            JointTarget::Body(bb) => {
                                let tb = body_point_coefficients(cb);
                                terms.extend(tb.iter().enumerate().map(|(p, &w)| (self.offsets[bb] + p, -w)));
                                0.0
                            }
                            JointTarget::Anchor(an) => self.anchors[an][k],
                        };
                        rows.push(Row::Linear { k, terms, constant });
                    }
                }
                Constraint::Axis { a, b, ua, ub } => {
                    let ta = body_axis_coefficients(ua);
                    let tb = body_axis_coefficients(ub);
                    for k in 0..self.d {
                        let mut terms: Vec<(usize, f64)> =
                            ta.iter().enumerate().map(|(p, &w)| (self.offsets[*a] + p, w)).collect();
                        terms.extend(tb.iter().enumerate().map(|(p, &w)| (self.offsets[*b] + p, -w)));
                        rows.push(Row::Linear { k, terms, constant: 0.0 });
                    }
                }
            }
        }
        rows
    }

    /// Enables or disables a declared or automatic constraint.
    pub fn set_enabled(&mut self, index: usize, on: bool) -> Result<()> {
        if index >= self.constraints.len() {
            return Err(CoreError::Topology(format!("constraint {index} out of range")));
        }
        self.enabled[index] = on;
        self.rows = self.compile();
        Ok(())
    }

    /// Applies a full mask (one flag per constraint).
    pub fn set_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.constraints.len() {
            return Err(CoreError::Topology(format!(
                "mask has {} entries, topology has {} constraints",
                mask.len(),
                self.constraints.len()
            )));
        }
        self.enabled.copy_from_slice(mask);
        self.rows = self.compile();
        Ok(())
    }

    /// Total point count `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Flattened position length `d·n`.
    pub fn dn(&self) -> usize {
        self.d * self.n
    }

    /// Number of active scalar constraints `C`.
    pub fn c(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn body_offset(&self, body: usize) -> usize {
        self.offsets[body]
    }

    pub fn has_extended_bodies(&self) -> bool {
        self.bodies.iter().any(|b| b.kind != BodyKind::Obj0D)
    }
}
