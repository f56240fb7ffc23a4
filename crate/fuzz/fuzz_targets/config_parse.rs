//! Problem-file decoding: arbitrary bytes through the JSON config parser,
//! expression compilation, and mesh/problem validation without panics.

#![no_main]

use libfuzzer_sys::fuzz_target;

use devbvp::config::{compile, ProblemConfig};
use devbvp::contraction::SampledProblem;
use devbvp::grid::Mesh;
use devbvp::model::validate_problem;

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = serde_json::from_slice::<ProblemConfig>(data) else {
        return;
    };
    let Ok(problem) = compile(&cfg) else {
        return;
    };
    // cap the mesh so fuzzing stays memory-bounded
    let n = problem.mesh_n.min(64);
    let Ok(mesh) = Mesh::new(problem.setup.bvp.horizon, problem.setup.bvp.radius, n) else {
        return;
    };
    let _ = validate_problem(&problem.setup.bvp, &mesh);
    let _ = SampledProblem::build(&problem.setup.bvp, &mesh, problem.setup.shift_first_sample());
});
