//! Small hand-checkable networks.
//!
//! `tri` and `tri_f` share one topology: a generator `g`, a junction `b` and
//! a load `l`. The direct line `g-l` has capacity 10, the detour `g-b-l` has
//! capacities 10 and 4, and all susceptances are 1 except that `tri_f` lets
//! the direct line range over `[1, 1.25]`.
//!
//! With equal susceptances the detour carries half the direct line's flow,
//! so the detour's capacity-4 line saturates at angle difference 8 while
//! the direct line carries only 8: MPF is 8 + 4 = 12. Raising the direct
//! line to 1.25 makes it carry 10 at the same angle, so both paths saturate
//! and MFF = MF = 14.

use crate::network::{Bus, Line, Network};

pub fn tri() -> Network {
    Network::new(
        vec![Bus::generator("g"), Bus::junction("b"), Bus::load("l")],
        vec![
            Line::fixed("g", "l", 1.0, 10.0),
            Line::fixed("g", "b", 1.0, 10.0),
            Line::fixed("b", "l", 1.0, 4.0),
        ],
    )
}

pub fn tri_f() -> Network {
    let mut net = tri();
    net.lines[0] = Line::facts("g", "l", 1.0, 1.25, 10.0);
    net
}

/// A single generator-load line with fixed susceptance 1.
pub fn single_line(capacity: f64) -> Network {
    Network::new(
        vec![Bus::generator("g"), Bus::load("l")],
        vec![Line::fixed("g", "l", 1.0, capacity)],
    )
}
