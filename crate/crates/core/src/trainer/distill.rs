// placeholder until pepd/objectives land
pub struct TrainState;
pub struct DistillOutcome;
pub fn distill() {}
