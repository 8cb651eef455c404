//! Train a small LSTM to track a delayed running mean, then save and reload
//! its checkpoint.

use ndarray::Array2;
use parasynth::nnet::{load_checkpoint_as, save_checkpoint, train_with, Dataset, Model, ModelConfig, ModelKind, Sequence, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sequence(rng: &mut ChaCha8Rng) -> Sequence {
    let t = rng.random_range(20..40);
    let input = Array2::from_shape_fn((t, 2), |_| rng.random_range(-1.0..1.0));
    let mut target = Array2::zeros((t, 1));
    let mut acc = 0.0;
    for i in 0..t {
        acc = 0.8 * acc + 0.2 * input[[i, 0]] - 0.1 * input[[i, 1]];
        target[[i, 0]] = acc;
    }
    Sequence { input, target }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = Dataset {
        train: (0..64).map(|_| sequence(&mut rng)).collect(),
        dev: (0..16).map(|_| sequence(&mut rng)).collect(),
    };
    let mut cfg = ModelConfig::recurrent(2, 1);
    cfg.hidden_layers = 1;
    cfg.hidden_width = 16;
    let tc = TrainConfig {
        max_epochs: 40,
        batch_size: 4,
        ..TrainConfig::for_kind(ModelKind::Recurrent)
    };
    let (model, history) = train_with(Model::new(cfg)?, &tc, &data, |r| {
        if r.epoch % 5 == 0 {
            println!("epoch {:3}: train {:.5} dev {:.5}", r.epoch, r.train_loss, r.dev_loss);
        }
    })?;
    println!("best dev {:.5} at epoch {}", history.best_dev_loss, history.best_epoch);

    let path = std::env::temp_dir().join("tiny_lstm.pvc");
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint_as(&path, ModelKind::Recurrent)?;
    let x = &data.dev[0].input;
    assert_eq!(model.predict(x.view())?, back.predict(x.view())?);
    println!("checkpoint {} reloads to identical predictions", path.display());
    Ok(())
}
