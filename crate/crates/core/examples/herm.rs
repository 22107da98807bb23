use covex::charfn::{cf_vplus, integral_i, IgParams};
use covex::model::ModelParams;
use num_complex::Complex64;

fn main() {
    let mp = ModelParams::benchmark(std::f64::consts::PI / 6.0);
    for u in [0.05, 0.15, 0.5] {
        let p = cf_vplus(&mp, 1.0, Complex64::new(u, 0.0));
        let m = cf_vplus(&mp, 1.0, Complex64::new(-u, 0.0));
        println!("u={u}: plus={p} conj(minus)={} diff={:.3e}", m.conj(), (p - m.conj()).norm());
    }
    let p = IgParams::new(1.0, 5.0, 1.0, 1.0);
    for tt in [0.15, -0.15, 0.0200961894323342, -0.0200961894323342, 0.2799038105676658, -0.2799038105676658] {
        let v = integral_i(&p, Complex64::new(tt, 0.0));
        println!("I({tt}) = {v:.15}");
    }
}
