use amlattice::units::{LatticeConfig, PhysicalParams};
use amlattice::wstark::wannier_stark_ladder;

fn main() {
    let c = LatticeConfig::new(PhysicalParams::sr88(14.0).unwrap()).unwrap();
    for sites in [48usize, 64, 80, 96] {
        match wannier_stark_ladder(&c, 2, sites, 16) {
            Ok(b2) => println!(
                "S={sites}: band2 ok, {} states, dev {:.2e}, purity {:.4}",
                b2.sites.len(), b2.max_spacing_deviation, b2.min_band_purity
            ),
            Err(e) => println!("S={sites}: {e}"),
        }
    }
}
