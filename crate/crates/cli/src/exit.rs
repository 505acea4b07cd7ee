use meshgnn::autodiff::AutodiffError;
use meshgnn::datagen::DatagenError;
use meshgnn::fem::FemError;
use meshgnn::gnn::GnnError;
use meshgnn::train::TrainError;

pub const INPUT_ERROR: u8 = 2;
pub const NUMERICAL_FAILURE: u8 = 3;

fn fem_is_numerical(e: &FemError) -> bool {
    matches!(
        e,
        FemError::CgNotConverged { .. }
            | FemError::NotPositiveDefinite { .. }
            | FemError::InvertedElement { .. }
            | FemError::InvertedIncrement { .. }
            | FemError::NewtonStall { .. }
    )
}

fn autodiff_is_numerical(e: &AutodiffError) -> bool {
    matches!(e, AutodiffError::NonFinite(_))
}

fn gnn_is_numerical(e: &GnnError) -> bool {
    matches!(e, GnnError::Autodiff(a) if autodiff_is_numerical(a))
}

/// Exit status for a failed command: numerical breakdowns get 3, everything else 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let numerical = if let Some(e) = cause.downcast_ref::<FemError>() {
            fem_is_numerical(e)
        } else if let Some(e) = cause.downcast_ref::<DatagenError>() {
            match e {
                DatagenError::Oracle { source, .. } | DatagenError::Fem(source) => fem_is_numerical(source),
                _ => false,
            }
        } else if let Some(e) = cause.downcast_ref::<TrainError>() {
            match e {
                TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } => true,
                TrainError::Gnn(g) => gnn_is_numerical(g),
                TrainError::Autodiff(a) => autodiff_is_numerical(a),
                _ => false,
            }
        } else if let Some(e) = cause.downcast_ref::<GnnError>() {
            gnn_is_numerical(e)
        } else if let Some(e) = cause.downcast_ref::<AutodiffError>() {
            autodiff_is_numerical(e)
        } else {
            false
        };
        if numerical {
            return NUMERICAL_FAILURE;
        }
    }
    INPUT_ERROR
}
