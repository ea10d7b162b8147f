use bitflags::bitflags;
use serde::{Deserialize, Serialize};

bitflags! {
    /// Per-argument access flags of `spawn` and `wait`.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
    pub struct ArgFlags: u8 {
        const IN = 1;
        const OUT = 2;
        /// Dependencies apply but the task never touches the data.
        const NOTRANSFER = 4;
        /// No dependency analysis: by-value scalars or pass-through handles.
        const SAFE = 8;
        const REGION = 16;
    }
}

impl ArgFlags {
    pub const INOUT: ArgFlags = ArgFlags::IN.union(ArgFlags::OUT);

    pub fn mode(self) -> Option<Mode> {
        if self.contains(ArgFlags::SAFE) {
            None
        } else if self.contains(ArgFlags::OUT) {
            Some(Mode::Rw)
        } else if self.contains(ArgFlags::IN) {
            Some(Mode::Ro)
        } else {
            None
        }
    }

    /// Whether a holder with `self` may hand `child` to a subtask.
    pub fn covers(self, child: ArgFlags) -> bool {
        (!child.contains(ArgFlags::IN) || self.contains(ArgFlags::IN))
            && (!child.contains(ArgFlags::OUT) || self.contains(ArgFlags::OUT))
    }
}

/// Dependency mode of an argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Ro,
    Rw,
}

impl Mode {
    pub fn conflicts(self, other: Mode) -> bool {
        self == Mode::Rw || other == Mode::Rw
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes() {
        assert_eq!(ArgFlags::IN.mode(), Some(Mode::Ro));
        assert_eq!(ArgFlags::INOUT.mode(), Some(Mode::Rw));
        assert_eq!(ArgFlags::OUT.mode(), Some(Mode::Rw));
        assert_eq!((ArgFlags::SAFE | ArgFlags::IN).mode(), None);
        assert!(ArgFlags::INOUT.covers(ArgFlags::IN));
        assert!(!ArgFlags::IN.covers(ArgFlags::OUT));
        assert!(!Mode::Ro.conflicts(Mode::Ro));
        assert!(Mode::Ro.conflicts(Mode::Rw));
    }
}
