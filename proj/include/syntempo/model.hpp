#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "syntempo/matrix.hpp"
#include "syntempo/syntree.hpp"

namespace syntempo {

class TemplateLibrary;

// Token -> index map with a reserved OOV slot at index 0.
class Vocab {
 public:
  Vocab();

  // Adds a token if unseen; returns its index. First-occurrence order.
  int add(const std::string& token);
  int lookup(const std::string& token) const;  // 0 for unknown
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Hyper {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_hidden = 128;
  int max_sentence_len = 64;
  int max_template_len = 192;
  bool head_bias = true;
  Vocab sentence_vocab;
  Vocab template_vocab;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;  // throws DimMismatch on inconsistent shapes
};

// Offset/shape handle into the flat parameter vector.
struct Tensor {
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
};

struct AttentionBlockTensors {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct EncoderTensors {
  Tensor embed;
  std::vector<AttentionBlockTensors> layers;
  Tensor lnf_gain, lnf_bias;
  Tensor proj_w1, proj_b1, proj_w2, proj_b2;  // FFN-s / FFN-t
};

struct ParamLayout {
  EncoderTensors sentence;
  EncoderTensors tmpl;
  Tensor head_w;  // [1, 2*d_model]
  Tensor head_b;  // [1, 1]
  std::size_t total = 0;

  static ParamLayout build(const Hyper& hyper);
};

// All learnable tensors, stored flat so the optimizer, checkpointing and
// finite-difference checks can treat the model as one vector.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(Hyper hyper, std::uint64_t init_seed);

  const Hyper& hyper() const { return hyper_; }
  const ParamLayout& layout() const { return layout_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() {
    hash_valid_ = false;
    return values_;
  }

  // FNV-1a over the raw tensor bytes; cached until the next mutation.
  std::uint64_t content_hash() const;

  const double* data(const Tensor& t) const { return values_.data() + t.offset; }
  double* mutable_data(const Tensor& t) {
    hash_valid_ = false;
    return values_.data() + t.offset;
  }

 private:
  Hyper hyper_;
  ParamLayout layout_;
  std::vector<double> values_;
  mutable std::uint64_t hash_ = 0;
  mutable bool hash_valid_ = false;
};

// Intermediates of one encoder pass, kept for reverse mode.
struct EncoderTrace {
  std::vector<int> token_ids;
  Matrix x0;  // embeddings (scaled) + positions
  struct BlockTrace {
    Matrix ln1_xhat, ln1_out;
    std::vector<double> ln1_rstd;
    Matrix q, k, v;                   // [seq, d_model], heads packed
    std::vector<Matrix> attn_probs;   // per head [seq, seq]
    Matrix attn_concat;               // heads merged, before wo
    Matrix x_attn;                    // residual after attention
    Matrix ln2_xhat, ln2_out;
    std::vector<double> ln2_rstd;
    Matrix ff_pre, ff_act;
    Matrix x_out;
  };
  std::vector<BlockTrace> blocks;
  Matrix lnf_xhat;
  std::vector<double> lnf_rstd;
  Matrix h;         // encoder output, Enc-s / Enc-t
  Matrix proj_pre;  // FFN hidden pre-activation
  Matrix proj_act;
  Matrix e;         // final embeddings e^s / e^t
};

// Everything needed to replay the score computation backwards.
struct ScoreTrace {
  std::uint64_t param_hash = 0;
  EncoderTrace sentence;
  EncoderTrace tmpl;
  Matrix correlation;  // n x m
  std::vector<int> row_argmax;  // per sentence row, lowest index on ties
  std::vector<int> col_argmax;  // per template column
  std::vector<double> v_s, v_t;
  double logit = 0.0;
  double score = 0.0;
};

struct Gradients {
  std::vector<double> values;  // same layout as ModelParams
};

// --- forward ---

// e^s = FFN-s(Enc-s(tokens)); rows = min(n, max_sentence_len).
Matrix encode_sentence(const ModelParams& params,
                       const std::vector<std::string>& tokens,
                       EncoderTrace* trace = nullptr);

// e^t for linearization tokens, via Enc-t / FFN-t.
Matrix encode_template(const ModelParams& params, const LinearTemplate& tokens,
                       EncoderTrace* trace = nullptr);

// C[i][j] = dot(e_s row i, e_t row j).
Matrix correlation(const Matrix& e_s, const Matrix& e_t);

struct PoolResult {
  std::vector<int> row_argmax;
  std::vector<int> col_argmax;
  std::vector<double> v_s;
  std::vector<double> v_t;
};

// v^s = (1/n) sum_i (max_j C_ij) e^s_i and the column-wise mirror for v^t.
// Ties in the max go to the lowest index (gradient routing only).
PoolResult pool(const Matrix& e_s, const Matrix& e_t, const Matrix& c);

// Full scoring pass; s in (0,1).
double score(const ModelParams& params, const std::vector<std::string>& tokens,
             const LinearTemplate& tmpl, ScoreTrace* trace = nullptr);

// Exact reverse-mode gradients of score w.r.t. every parameter, scaled by
// d_loss_d_score. The trace must come from score() on the same params.
Gradients backward(const ModelParams& params, const ScoreTrace& trace,
                   double d_loss_d_score);
void backward_into(const ModelParams& params, const ScoreTrace& trace,
                   double d_loss_d_score, Gradients& grads);

// --- template-side cache (two-tower split) ---

struct TemplateEncodingCache {
  std::uint64_t param_hash = 0;
  std::vector<Matrix> encodings;  // by entry id
};

TemplateEncodingCache encode_library(const ModelParams& params,
                                     const TemplateLibrary& lib, int threads);
// Plain loop kept as the reference implementation for the parallel kernel.
TemplateEncodingCache encode_library_serial(const ModelParams& params,
                                            const TemplateLibrary& lib);

double score_with_cache(const ModelParams& params,
                        const std::vector<std::string>& tokens,
                        const TemplateEncodingCache& cache, int id);

// Head + pooling on precomputed tower outputs.
double score_from_encodings(const ModelParams& params, const Matrix& e_s,
                            const Matrix& e_t);

void save_cache(const TemplateEncodingCache& cache, const std::string& path);
TemplateEncodingCache load_cache(const std::string& path);

// --- checkpointing ---

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace syntempo
