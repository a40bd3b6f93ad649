pub mod bench;
pub mod evaluate;
pub mod gen_targets;
pub mod loss_check;
pub mod postprocess;
pub mod toy_distill;
