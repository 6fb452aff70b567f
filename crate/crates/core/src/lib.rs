pub mod asymptotics;
pub mod hedger;
pub mod mathkit;
pub mod pricer;
pub mod volsim;
