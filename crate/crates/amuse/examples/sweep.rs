use amuse::audio::{estimate_bpm, TempoBand};
use amuse::synth::click_track;
use rand::{Rng, SeedableRng};

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let truth: f64 = rng.gen_range(50.0..180.0);
        let clip = click_track(truth, 10.0, 8000, 0.8);
        let bpm = estimate_bpm(&clip, TempoBand::default()).unwrap().unwrap();
        let err = (bpm - truth).abs();
        if err > 2.0 {
            println!("truth {:7.3}  est {:7.3}  err {:6.3}  MISS", truth, bpm, err);
        } else {
            println!("truth {:7.3}  est {:7.3}  err {:6.3}", truth, bpm, err);
        }
    }
}
