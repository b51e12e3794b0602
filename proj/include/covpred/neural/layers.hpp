#pragma once

#include <string>
#include <vector>

#include "covpred/neural/param_store.hpp"
#include "covpred/neural/tape.hpp"
#include "covpred/rng.hpp"

namespace covpred::neural {

// Activations are column vectors; biases broadcast across columns so the
// same steps also accept (n x B) inputs.

struct DenseSpec {
    int input_size = 0;
    int output_size = 0;
};

struct LstmCellSpec {
    int input_size = 0;
    int hidden_size = 0;
};

struct GruCellSpec {
    int input_size = 0;
    int hidden_size = 0;
};

struct MlpSpec {
    int input_size = 0;
    int hidden_size = 0;
    int output_size = 0;
    double dropout = 0.0;
};

struct AttentionSpec {
    int query_size = 0;
    int key_size = 0;
    int value_size = 0;
    int attn_size = 0;
};

/// Weights uniform in +-sqrt(1/fan_in), biases zero, LSTM forget bias +1.
void init_matrix(ParamStore& store, const std::string& name, int rows, int cols, Rng& rng);
void init_dense(ParamStore& store, const std::string& prefix, const DenseSpec& spec, Rng& rng);
void init_lstm(ParamStore& store, const std::string& prefix, const LstmCellSpec& spec, Rng& rng);
void init_gru(ParamStore& store, const std::string& prefix, const GruCellSpec& spec, Rng& rng);
void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);
void init_attention(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng);

Var dense(Tape& t, ParamBinder& p, const std::string& prefix, Var x);

struct LstmState {
    Var h;
    Var c;
};

LstmState lstm_initial(Tape& t, const LstmCellSpec& spec);
/// Gates packed row-wise as [input, forget, candidate, output].
LstmState lstm_step(Tape& t, ParamBinder& p, const std::string& prefix,
                    const LstmCellSpec& spec, Var x, const LstmState& prev);

Var gru_initial(Tape& t, const GruCellSpec& spec);
Var gru_step(Tape& t, ParamBinder& p, const std::string& prefix,
             const GruCellSpec& spec, Var x, Var h);

/// dense -> sigmoid -> dropout -> dense.
Var mlp_forward(Tape& t, ParamBinder& p, const std::string& prefix,
                const MlpSpec& spec, Var x, bool train, Rng& rng);

struct AttentionResult {
    Var context;                ///< weighted value sum, zero when all masked
    Eigen::VectorXd weights;    ///< per-input weight, 0 where masked out
};

/// Additive scoring score_i = v' tanh(Wq q + Wk k_i) with softmax over the
/// unmasked entries.
AttentionResult additive_attention(Tape& t, ParamBinder& p, const std::string& prefix,
                                   const AttentionSpec& spec, Var query,
                                   const std::vector<Var>& keys,
                                   const std::vector<Var>& values,
                                   const std::vector<bool>& mask);

}  // namespace covpred::neural
