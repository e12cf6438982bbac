use insitu_cli::config::PipelineConfig;
use insitu_core::dataset::WindowConfig;
use insitu_core::mechanisms::MechanismId;
use insitu_rnn::TrainConfig;

/// Two users, one minute, tiny models: seconds, not minutes.
pub fn tiny() -> PipelineConfig {
    PipelineConfig {
        seed: 5,
        users: 2,
        session_s: 60.0,
        mechanisms: vec![MechanismId::ThreeButton, MechanismId::Touch],
        hidden: 8,
        window: WindowConfig::default(),
        train: TrainConfig {
            epochs: 2,
            folds: 2,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    }
}
