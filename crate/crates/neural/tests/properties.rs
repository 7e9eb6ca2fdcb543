use loadgan_neural::{
    adam_step, discriminator_loss, generator_loss, read_checkpoint, write_checkpoint, Activation, AdamState, LayerSpec,
    Network, OptimConfig, Tensor,
};
use ndarray::Array3;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(7),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn small_generator(latent: usize, len: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { inputs: latent, units: 2 * len },
        LayerSpec::Reshape { channels: 2, length: len },
        LayerSpec::Conv1d {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
        },
        LayerSpec::Activation {
            function: Activation::LeakyRelu,
        },
        LayerSpec::Lstm {
            input: 3,
            hidden: 4,
            layers: 1,
            return_sequences: true,
        },
        LayerSpec::Conv1d {
            in_channels: 4,
            out_channels: 1,
            kernel: 1,
        },
        LayerSpec::Activation {
            function: Activation::Tanh,
        },
    ]
}

fn noise(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Tensor {
    Array3::from_shape_simple_fn(dim, || rng.sample(StandardNormal))
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn checkpoint_round_trip_preserves_outputs_and_adam(seed in any::<u64>(), latent in 1usize..6, len in 2usize..10, steps in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(small_generator(latent, len), &mut rng).unwrap();
        let mut adam = AdamState::for_network(&net);
        for _ in 0..steps {
            let z = noise(&mut rng, (2, latent, 1));
            let out = net.forward(&z).unwrap();
            net.backward(&out).unwrap();
            adam_step(&mut net, &mut adam, &OptimConfig::default()).unwrap();
        }
        let meta = serde_json::json!({ "seed": seed });
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &meta, &[("g", &net, &adam)]).unwrap();
        let mut ck = read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(&ck.meta, &meta);
        let mut stored = ck.take("g").unwrap();
        prop_assert_eq!(&stored.adam, &adam);
        let z = noise(&mut rng, (3, latent, 1));
        prop_assert_eq!(stored.network.predict(&z).unwrap(), net.predict(&z).unwrap());
    }

    #[test]
    fn tanh_generator_stays_in_unit_interval(seed in any::<u64>(), scale in 0.1..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(small_generator(3, 6), &mut rng).unwrap();
        let z = noise(&mut rng, (4, 3, 1)) * scale;
        let out = net.predict(&z).unwrap();
        prop_assert_eq!(out.dim(), (4, 1, 6));
        prop_assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn losses_are_finite_and_signed(real in prop::collection::vec(0.0..=1.0f64, 1..16), fake in prop::collection::vec(0.0..=1.0f64, 1..16)) {
        let (loss, g_real, g_fake) = discriminator_loss(&real, &fake);
        prop_assert!(loss.is_finite() && loss >= 0.0);
        // Raising D on real samples and lowering it on fakes reduces the loss.
        prop_assert!(g_real.iter().all(|g| g.is_finite() && *g < 0.0));
        prop_assert!(g_fake.iter().all(|g| g.is_finite() && *g > 0.0));
        let g = generator_loss(&fake);
        prop_assert!(g.loss.is_finite() && g.grad.iter().all(|v| v.is_finite() && *v < 0.0));
    }
}
