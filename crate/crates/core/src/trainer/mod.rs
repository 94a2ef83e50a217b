//! A two-layer classifier trained with mini-batch SGD, its analytic
//! cross-entropy gradients, the 2-D toy experiment, and the one-step
//! feature-shift predictor for absent inputs.

mod gradcheck;
mod model;
mod sgd;
mod shift;
mod toy;

pub use gradcheck::{
    finite_difference_error, random_gradcheck, random_instance, relative_error, GradcheckReport, FD_STEP,
    GRADCHECK_TOLERANCE, REL_ERROR_FLOOR,
};
pub use model::{Activation, Forward, LossGrads, MlpModel};
pub use sgd::{fine_tune, EpochRecord, TrainConfig, TrainHistory, TrainMode};
pub use shift::{absent_feature_shift, FeatureShift};
pub use toy::{
    gen_toy_data, run_toy_pipeline, toy_initial_model, toy_train_config, train_test_split, ToyReport, ToySpec,
    DEFAULT_SHIFT, HEAD_INIT_STDDEV, TRAIN_FRACTION,
};
