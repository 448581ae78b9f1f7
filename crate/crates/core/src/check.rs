/// Outcome of a property check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    /// The hypotheses of the property are not met by the instance.
    Inapplicable,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok { Verdict::Holds } else { Verdict::Violated }
    }

    pub fn holds(self) -> bool {
        self == Verdict::Holds
    }

    /// Violated dominates, then Inapplicable.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Violated, _) | (_, Violated) => Violated,
            (Inapplicable, _) | (_, Inapplicable) => Inapplicable,
            _ => Holds,
        }
    }
}
