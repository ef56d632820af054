//! Compiles the hierarchy equations of a quartic model and prints them.

use qbbgky::cli_io::describe_program;
use qbbgky::ladder::compile_hierarchy;
use qbbgky::model::{InteractionKernel, ModeGrid, ModelSpec};

pub fn run_example() -> qbbgky::Result<usize> {
    let model = ModelSpec::free(ModeGrid::line(2, 1.0)?, 1.0).with_interaction(InteractionKernel::Constant { value: 1.0 }, 0.1);
    let store = model.coefficient_store()?;
    let programs = compile_hierarchy(&store, 3)?;
    for p in programs.iter() {
        println!("{}", describe_program(p));
    }
    Ok(programs.len())
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
