use peakonlab::phase_plane::*;
use peakonlab::wave_builder::*;
use peakonlab::weak_verifier::*;
fn main() {
    let p0 = ModelParams::line(0.0, 2.0, 0.0);
    let w = build_patched_solution(&p0, 0.0).unwrap();
    println!("kind {:?} joints {:?} range {:?}", w.kind, w.joints, w.xi_range);
    for a in [1.05, 1.2, 1.5] {
        let ww = w.clone();
        let cand = FnCandidate { f: move |x: f64, t: f64| { let (f, v) = ww.eval(x - 2.0 * t).unwrap_or((0.0, 0.0)); (a * f, a * v) }, lines: vec![Line { x0: 0.0, speed: 2.0 }], ell: f64::INFINITY, k: 0.0 };
        let r = residual_suite(&cand, 7, 10).unwrap();
        println!("scale {a}: max {:e} median {:e}", r.max_residual, r.median_residual);
    }
    let s3 = 3f64.sqrt();
    for sp in [2.0, 2.3] {
        let c = PeakonCandidate::new(2.0 * s3, sp, 0.0, 0.0, f64::INFINITY);
        let t = TestFunction::new(2.0, 1.0, 1.0, 0.5).unwrap();
        let r = weak_residual(&c, &t, 2.0).unwrap();
        println!("speed {sp}: value {:e} scale {:e} sup {:e} norm {:e} supnorm {:e}", r.value, r.scale, r.sup_scale, r.normalized(), r.value.abs()/r.sup_scale);
    }
    let p1 = ModelParams::line(1.0, 2.0, 2.0);
    let t0 = std::time::Instant::now();
    let w5 = build_patched_solution(&p1, 5.0).unwrap();
    let r = residual_suite(&TravelingCandidate::new(w5), 7, 10).unwrap();
    println!("patched k1 h5: {:e} {:?}", r.max_residual, t0.elapsed());
    let cm = PeakonCandidate::new(1.5, single_peakon_speed_m(), 0.0, -1.0, f64::INFINITY);
    println!("k=-1: {:e}", residual_suite(&cm, 7, 10).unwrap().max_residual);
    let ct = PeakonCandidate::new(2.0, peakonlab::peakon_dynamics::single_peakon_speed(8.0, 0.0, 2.0).unwrap(), 0.0, 0.0, 8.0);
    println!("torus: {:e}", residual_suite(&ct, 7, 10).unwrap().max_residual);
}
fn single_peakon_speed_m() -> f64 { peakonlab::peakon_dynamics::single_peakon_speed(f64::INFINITY, -1.0, 1.5).unwrap() }
