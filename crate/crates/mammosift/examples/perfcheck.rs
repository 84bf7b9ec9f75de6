use mammosift::imgdata::GrayImage16;
use mammosift::morphology::*;
use std::time::Instant;

fn main() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let side = 1024;
    let pixels: Vec<u16> = (0..side * side).map(|_| rng.random()).collect();
    let img = GrayImage16 { width: side, height: side, pixels, pixel_size_mm: 1.0 };
    for len in [61usize, 245] {
        let mut tf = 0.0;
        let mut tn = 0.0;
        for a in [20.0f64, 40.0, 90.0, 130.0] {
            let se = make_line_se(len, a);
            let t0 = Instant::now();
            let fast = open_line(&img, &se);
            tf += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let naive = dilate_line(&erode_line(&img, &se), &se);
            tn += t0.elapsed().as_secs_f64();
            assert_eq!(fast, naive);
        }
        println!("len {len}: fast {tf:.3}s naive {tn:.3}s ratio {:.1}x", tn / tf);
    }
}
