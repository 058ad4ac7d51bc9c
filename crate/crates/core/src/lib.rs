pub mod ac;
pub mod demand;
pub mod harness;
pub mod linpf;
pub mod lp;
pub mod milp;
pub mod net;
pub mod synth;
