use holomech::lie::lie_expand;
use holomech::numeric::Mat;
use holomech::rigid_body::{euler_poisson_field, BodyState, InertiaData};

fn main() {
    let d = InertiaData::from_principal_inertia([1.0, 2.0, 3.0]).unwrap();
    let field = euler_poisson_field(&d).unwrap();
    for om in [[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [0.5, 0.5, 0.5]] {
        let z0 = BodyState {
            r: Mat::identity(3),
            m: d.inertia.matvec(&om),
        }
        .packed();
        for order in [10, 20, 30] {
            let sol = lie_expand(&field, &z0, order).unwrap();
            println!("omega {:?} order {order}: radius estimate {:.3}", om, sol.radius_estimate);
        }
    }
}
