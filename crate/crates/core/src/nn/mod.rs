//! Complex-valued neural networks: layers, backprop, Adam, training, file
//! formats, and the closed-form per-inference operation counts.

pub mod adam;
pub mod io;
pub mod layer;
pub mod loss;
pub mod network;
pub mod train;

pub use adam::{adam_update, AdamState};
pub use io::{load_dataset, load_model, save_dataset, save_model};
pub use layer::{
    complex_conv_forward, complex_linear_forward, crelu, ComplexBatch, ComplexLinearLayer,
};
pub use loss::{accuracy, cross_entropy_with_grad, sorted_mse_loss, sorted_mse_with_grad};
pub use network::{
    classify_num_targets, flatten_snapshot, ComplexNetwork, Gradients, Head, NetworkSpec,
};
pub use train::{evaluate_loss, train, Dataset, TrainConfig, TrainReport};

use crate::error::{CoreError, Result};

/// Closed-form multiplication/addition counts of one forward pass through the
/// standard `[S/2, S/4, S/8]` architecture:
///
/// `T_mul = 4(S*h1 + h1*h2 + h2*h3 + 2*h3) + 2(S + h1 + h2 + 2*N_out)`
/// `T_add = 3S + 7(h1 + h2) + 4*h3 + 8*N_out`
///
/// Evaluated verbatim; any other hidden chain is rejected.
pub fn mlp_op_counts(spec: &NetworkSpec) -> Result<(u64, u64)> {
    let s = spec.input_size as u64;
    let expected = [s / 2, s / 4, s / 8];
    let hidden = [
        spec.hidden[0] as u64,
        spec.hidden[1] as u64,
        spec.hidden[2] as u64,
    ];
    if hidden != expected {
        return Err(CoreError::UnsupportedShape(format!(
            "hidden chain {hidden:?} is not the closed-form [S/2, S/4, S/8] = {expected:?}"
        )));
    }
    let n_out = spec.head.n_out() as u64;
    let (h1, h2, h3) = (hidden[0], hidden[1], hidden[2]);
    let t_mul = 4 * (s * h1 + h1 * h2 + h2 * h3 + 2 * h3) + 2 * (s + h1 + h2 + 2 * n_out);
    let t_add = 3 * s + 7 * (h1 + h2) + 4 * h3 + 8 * n_out;
    Ok((t_mul, t_add))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_counts_match_hand_evaluation_small() {
        // S = 8: hidden [4, 2, 1], N_out = 2
        let spec = NetworkSpec::regression(8, 1);
        let (mul, add) = mlp_op_counts(&spec).unwrap();
        // T_mul = 4(8*4 + 4*2 + 2*1 + 2*1) + 2(8 + 4 + 2 + 4) = 4*44 + 2*18 = 212
        assert_eq!(mul, 212);
        // T_add = 3*8 + 7*(4 + 2) + 4*1 + 8*2 = 24 + 42 + 4 + 16 = 86
        assert_eq!(add, 86);
    }

    #[test]
    fn op_counts_match_hand_evaluation_article_size() {
        // S = 80 (8x10 arrays), N_out = 2: hidden [40, 20, 10]
        let spec = NetworkSpec::regression(80, 1);
        let (mul, add) = mlp_op_counts(&spec).unwrap();
        // T_mul = 4(80*40 + 40*20 + 20*10 + 2*10) + 2(80 + 40 + 20 + 4)
        //       = 4*4220 + 2*144 = 17168
        assert_eq!(mul, 17168);
        // T_add = 240 + 7*60 + 40 + 16 = 716
        assert_eq!(add, 716);
    }

    #[test]
    fn extra_output_neuron_costs_eight_adds() {
        let base = NetworkSpec::regression(64, 1); // N_out = 2
        let bigger = NetworkSpec::regression(64, 2); // N_out = 4
        let (_, add1) = mlp_op_counts(&base).unwrap();
        let (_, add2) = mlp_op_counts(&bigger).unwrap();
        assert_eq!(add2 - add1, 16); // +2 neurons -> +16 adds, 8 per neuron
    }

    #[test]
    fn nonstandard_hidden_chain_is_rejected() {
        let mut spec = NetworkSpec::regression(64, 1);
        spec.hidden = [30, 16, 8];
        assert!(matches!(
            mlp_op_counts(&spec),
            Err(CoreError::UnsupportedShape(_))
        ));
    }
}
