//! The Kac walk: collision rules, hard-sphere rates, event-driven schedulers,
//! perturbed kernels and martingale reweighting.

mod collision;
mod girsanov;
mod kernel;
mod sim;
mod sphere;
mod trajectory;

pub use collision::{collide_in_place, collision_map, hard_sphere_b, pair_rate, sample_scatter_direction};
pub use girsanov::{girsanov_log_weight, lambda_f};
pub use kernel::{CollisionKernel, FnKernel, HardSphere, KernelSpec, Maxwell, ScaledHardSphere, Truncated};
pub use sim::{simulate, simulate_exact, simulate_hard_sphere, simulate_null_collision, simulate_perturbed, Scheme};
pub use sphere::{kappa, orthonormal_pair, sphere_area, uniform_direction, SphereRule, Vector};
pub use trajectory::{read_event_log, write_event_log, CollisionEvent, EventLogHeader, Trajectory};
