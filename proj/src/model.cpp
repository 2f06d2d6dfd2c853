#include "syntempo/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "syntempo/error.hpp"
#include "syntempo/io_util.hpp"
#include "syntempo/rng.hpp"
#include "syntempo/template_library.hpp"

namespace syntempo {

namespace {

constexpr double kLnEps = 1e-5;

using json = nlohmann::json;

}  // namespace

// --- Vocab ---

Vocab::Vocab() { add("<unk>"); }

int Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0 : it->second;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.empty() || tokens.front() != "<unk>") {
    throw Error(ErrorKind::ParseError,
                "vocabulary list must start with <unk>");
  }
  Vocab v;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != static_cast<int>(i)) {
      throw Error(ErrorKind::ParseError,
                  "duplicate token in vocabulary list: " + tokens[i]);
    }
  }
  return v;
}

// --- Hyper / layout ---

void Hyper::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_hidden <= 0) {
    throw Error(ErrorKind::DimMismatch, "model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw Error(ErrorKind::DimMismatch,
                "d_model (" + std::to_string(d_model) +
                    ") must be divisible by n_heads (" +
                    std::to_string(n_heads) + ")");
  }
  if (max_sentence_len <= 0 || max_template_len <= 0) {
    throw Error(ErrorKind::DimMismatch, "sequence limits must be positive");
  }
  if (sentence_vocab.size() < 1 || template_vocab.size() < 1) {
    throw Error(ErrorKind::DimMismatch, "vocabularies must be non-empty");
  }
}

namespace {

struct LayoutCursor {
  std::size_t next = 0;
  Tensor take(int rows, int cols) {
    Tensor t{next, rows, cols};
    next += t.count();
    return t;
  }
};

EncoderTensors build_encoder(LayoutCursor& cur, const Hyper& h,
                             int vocab_size) {
  EncoderTensors e;
  e.embed = cur.take(vocab_size, h.d_model);
  e.layers.resize(h.n_layers);
  for (auto& l : e.layers) {
    l.ln1_gain = cur.take(1, h.d_model);
    l.ln1_bias = cur.take(1, h.d_model);
    l.wq = cur.take(h.d_model, h.d_model);
    l.bq = cur.take(1, h.d_model);
    l.wk = cur.take(h.d_model, h.d_model);
    l.bk = cur.take(1, h.d_model);
    l.wv = cur.take(h.d_model, h.d_model);
    l.bv = cur.take(1, h.d_model);
    l.wo = cur.take(h.d_model, h.d_model);
    l.bo = cur.take(1, h.d_model);
    l.ln2_gain = cur.take(1, h.d_model);
    l.ln2_bias = cur.take(1, h.d_model);
    l.ff_w1 = cur.take(h.d_model, h.ffn_hidden);
    l.ff_b1 = cur.take(1, h.ffn_hidden);
    l.ff_w2 = cur.take(h.ffn_hidden, h.d_model);
    l.ff_b2 = cur.take(1, h.d_model);
  }
  e.lnf_gain = cur.take(1, h.d_model);
  e.lnf_bias = cur.take(1, h.d_model);
  e.proj_w1 = cur.take(h.d_model, h.ffn_hidden);
  e.proj_b1 = cur.take(1, h.ffn_hidden);
  e.proj_w2 = cur.take(h.ffn_hidden, h.d_model);
  e.proj_b2 = cur.take(1, h.d_model);
  return e;
}

}  // namespace

ParamLayout ParamLayout::build(const Hyper& hyper) {
  LayoutCursor cur;
  ParamLayout layout;
  layout.sentence = build_encoder(cur, hyper, hyper.sentence_vocab.size());
  layout.tmpl = build_encoder(cur, hyper, hyper.template_vocab.size());
  layout.head_w = cur.take(2 * hyper.d_model, 1);
  layout.head_b = cur.take(1, hyper.head_bias ? 1 : 0);
  layout.total = cur.next;
  return layout;
}

// --- params ---

namespace {

void init_encoder(std::vector<double>& v, const EncoderTensors& e,
                  const Hyper& h, Rng& rng) {
  auto uniform = [&](const Tensor& t, double bound) {
    for (std::size_t i = 0; i < t.count(); ++i) {
      v[t.offset + i] = rng.next_symmetric(bound);
    }
  };
  auto fill = [&](const Tensor& t, double value) {
    for (std::size_t i = 0; i < t.count(); ++i) v[t.offset + i] = value;
  };
  uniform(e.embed, 1.0 / std::sqrt(static_cast<double>(h.d_model)));
  for (const auto& l : e.layers) {
    fill(l.ln1_gain, 1.0);
    fill(l.ln1_bias, 0.0);
    const double wb = 1.0 / std::sqrt(static_cast<double>(h.d_model));
    uniform(l.wq, wb);
    fill(l.bq, 0.0);
    uniform(l.wk, wb);
    fill(l.bk, 0.0);
    uniform(l.wv, wb);
    fill(l.bv, 0.0);
    uniform(l.wo, wb);
    fill(l.bo, 0.0);
    fill(l.ln2_gain, 1.0);
    fill(l.ln2_bias, 0.0);
    uniform(l.ff_w1, wb);
    fill(l.ff_b1, 0.0);
    uniform(l.ff_w2, 1.0 / std::sqrt(static_cast<double>(h.ffn_hidden)));
    fill(l.ff_b2, 0.0);
  }
  fill(e.lnf_gain, 1.0);
  fill(e.lnf_bias, 0.0);
  uniform(e.proj_w1, 1.0 / std::sqrt(static_cast<double>(h.d_model)));
  fill(e.proj_b1, 0.0);
  uniform(e.proj_w2, 1.0 / std::sqrt(static_cast<double>(h.ffn_hidden)));
  fill(e.proj_b2, 0.0);
}

}  // namespace

ModelParams::ModelParams(Hyper hyper, std::uint64_t init_seed)
    : hyper_(std::move(hyper)) {
  hyper_.validate();
  layout_ = ParamLayout::build(hyper_);
  values_.assign(layout_.total, 0.0);
  Rng rng(init_seed);
  init_encoder(values_, layout_.sentence, hyper_, rng);
  init_encoder(values_, layout_.tmpl, hyper_, rng);
  const double hb = 1.0 / std::sqrt(static_cast<double>(2 * hyper_.d_model));
  for (std::size_t i = 0; i < layout_.head_w.count(); ++i) {
    values_[layout_.head_w.offset + i] = rng.next_symmetric(hb);
  }
  // head bias (when present) starts at zero, which assign() already did
}

std::uint64_t ModelParams::content_hash() const {
  if (!hash_valid_) {
    hash_ = fnv1a(values_.data(), values_.size() * sizeof(double));
    hash_valid_ = true;
  }
  return hash_;
}

// --- forward pieces ---

namespace {

void add_bias(Matrix& m, const double* bias) {
  for (int r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) row[c] += bias[c];
  }
}

void layer_norm(const Matrix& x, const double* gain, const double* bias,
                Matrix& xhat, std::vector<double>& rstd, Matrix& out) {
  const int d = x.cols;
  xhat = Matrix(x.rows, d);
  out = Matrix(x.rows, d);
  rstd.assign(x.rows, 0.0);
  for (int r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dev = xr[c] - mean;
      var += dev * dev;
    }
    var /= d;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[r] = rs;
    double* hr = xhat.row(r);
    double* outr = out.row(r);
    for (int c = 0; c < d; ++c) {
      hr[c] = (xr[c] - mean) * rs;
      outr[c] = hr[c] * gain[c] + bias[c];
    }
  }
}

// dx += LN'(dy); dgain/dbias accumulate.
void layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                         const std::vector<double>& rstd, const double* gain,
                         Matrix& dx, double* dgain, double* dbias) {
  const int d = dy.cols;
  std::vector<double> dxhat(d);
  for (int r = 0; r < dy.rows; ++r) {
    const double* dyr = dy.row(r);
    const double* hr = xhat.row(r);
    double* dxr = dx.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (int c = 0; c < d; ++c) {
      dgain[c] += dyr[c] * hr[c];
      dbias[c] += dyr[c];
      dxhat[c] = dyr[c] * gain[c];
      m1 += dxhat[c];
      m2 += dxhat[c] * hr[c];
    }
    m1 /= d;
    m2 /= d;
    for (int c = 0; c < d; ++c) {
      dxr[c] += rstd[r] * (dxhat[c] - m1 - hr[c] * m2);
    }
  }
}

void tanh_inplace(Matrix& m) {
  for (double& v : m.a) v = std::tanh(v);
}

void softmax_rows(Matrix& m) {
  for (int r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    double max = row[0];
    for (int c = 1; c < m.cols; ++c) max = std::max(max, row[c]);
    double sum = 0.0;
    for (int c = 0; c < m.cols; ++c) {
      row[c] = std::exp(row[c] - max);
      sum += row[c];
    }
    for (int c = 0; c < m.cols; ++c) row[c] /= sum;
  }
}

Matrix head_slice(const Matrix& m, int head, int head_dim) {
  Matrix out(m.rows, head_dim);
  for (int r = 0; r < m.rows; ++r) {
    std::memcpy(out.row(r), m.row(r) + head * head_dim,
                sizeof(double) * head_dim);
  }
  return out;
}

void head_scatter_add(const Matrix& part, int head, int head_dim, Matrix& m) {
  for (int r = 0; r < m.rows; ++r) {
    double* dst = m.row(r) + head * head_dim;
    const double* src = part.row(r);
    for (int c = 0; c < head_dim; ++c) dst[c] += src[c];
  }
}

void column_sums_add(const Matrix& m, double* out) {
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) out[c] += row[c];
  }
}

Matrix as_matrix(const ModelParams& p, const Tensor& t) {
  Matrix m(t.rows, t.cols);
  std::memcpy(m.a.data(), p.data(t), t.count() * sizeof(double));
  return m;
}

// The shared encoder stack: embeddings + sinusoidal positions, pre-norm
// self-attention blocks, final norm, then the tower's two-layer projection.
Matrix run_encoder(const ModelParams& params, const EncoderTensors& tensors,
                   const Vocab& vocab, const std::vector<std::string>& tokens,
                   int max_len, const char* what, EncoderTrace& trace) {
  if (tokens.empty()) {
    throw Error(ErrorKind::EmptyInput, std::string("empty ") + what);
  }
  const Hyper& h = params.hyper();
  const int d = h.d_model;
  const int seq =
      static_cast<int>(std::min<std::size_t>(tokens.size(), max_len));

  trace.token_ids.resize(seq);
  for (int i = 0; i < seq; ++i) trace.token_ids[i] = vocab.lookup(tokens[i]);

  const double scale = std::sqrt(static_cast<double>(d));
  Matrix x(seq, d);
  const double* embed = params.data(tensors.embed);
  for (int i = 0; i < seq; ++i) {
    const double* erow = embed + static_cast<std::size_t>(trace.token_ids[i]) * d;
    double* xr = x.row(i);
    for (int c = 0; c < d; ++c) xr[c] = erow[c] * scale;
    for (int k = 0; 2 * k < d; ++k) {
      const double freq = std::pow(10000.0, -2.0 * k / d);
      xr[2 * k] += std::sin(i * freq);
      if (2 * k + 1 < d) xr[2 * k + 1] += std::cos(i * freq);
    }
  }
  trace.x0 = x;

  const int hd = h.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  trace.blocks.resize(h.n_layers);
  for (int li = 0; li < h.n_layers; ++li) {
    const auto& lt = tensors.layers[li];
    auto& bt = trace.blocks[li];

    layer_norm(x, params.data(lt.ln1_gain), params.data(lt.ln1_bias),
               bt.ln1_xhat, bt.ln1_rstd, bt.ln1_out);

    matmul(bt.ln1_out, as_matrix(params, lt.wq), bt.q);
    add_bias(bt.q, params.data(lt.bq));
    matmul(bt.ln1_out, as_matrix(params, lt.wk), bt.k);
    add_bias(bt.k, params.data(lt.bk));
    matmul(bt.ln1_out, as_matrix(params, lt.wv), bt.v);
    add_bias(bt.v, params.data(lt.bv));

    bt.attn_probs.resize(h.n_heads);
    bt.attn_concat = Matrix(seq, d);
    for (int head = 0; head < h.n_heads; ++head) {
      const Matrix qh = head_slice(bt.q, head, hd);
      const Matrix kh = head_slice(bt.k, head, hd);
      const Matrix vh = head_slice(bt.v, head, hd);
      Matrix scores;
      matmul_nt(qh, kh, scores);
      for (double& s : scores.a) s *= attn_scale;
      softmax_rows(scores);
      bt.attn_probs[head] = scores;
      Matrix oh;
      matmul(scores, vh, oh);
      for (int r = 0; r < seq; ++r) {
        std::memcpy(bt.attn_concat.row(r) + head * hd, oh.row(r),
                    sizeof(double) * hd);
      }
    }

    Matrix attn_out;
    matmul(bt.attn_concat, as_matrix(params, lt.wo), attn_out);
    add_bias(attn_out, params.data(lt.bo));
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += attn_out.a[i];
    bt.x_attn = x;

    layer_norm(x, params.data(lt.ln2_gain), params.data(lt.ln2_bias),
               bt.ln2_xhat, bt.ln2_rstd, bt.ln2_out);
    matmul(bt.ln2_out, as_matrix(params, lt.ff_w1), bt.ff_pre);
    add_bias(bt.ff_pre, params.data(lt.ff_b1));
    bt.ff_act = bt.ff_pre;
    tanh_inplace(bt.ff_act);
    Matrix ff_out;
    matmul(bt.ff_act, as_matrix(params, lt.ff_w2), ff_out);
    add_bias(ff_out, params.data(lt.ff_b2));
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += ff_out.a[i];
    bt.x_out = x;
  }

  layer_norm(x, params.data(tensors.lnf_gain), params.data(tensors.lnf_bias),
             trace.lnf_xhat, trace.lnf_rstd, trace.h);

  matmul(trace.h, as_matrix(params, tensors.proj_w1), trace.proj_pre);
  add_bias(trace.proj_pre, params.data(tensors.proj_b1));
  trace.proj_act = trace.proj_pre;
  tanh_inplace(trace.proj_act);
  matmul(trace.proj_act, as_matrix(params, tensors.proj_w2), trace.e);
  add_bias(trace.e, params.data(tensors.proj_b2));
  return trace.e;
}

}  // namespace

Matrix encode_sentence(const ModelParams& params,
                       const std::vector<std::string>& tokens,
                       EncoderTrace* trace) {
  EncoderTrace local;
  EncoderTrace& t = trace ? *trace : local;
  return run_encoder(params, params.layout().sentence,
                     params.hyper().sentence_vocab, tokens,
                     params.hyper().max_sentence_len, "sentence", t);
}

Matrix encode_template(const ModelParams& params, const LinearTemplate& tokens,
                       EncoderTrace* trace) {
  EncoderTrace local;
  EncoderTrace& t = trace ? *trace : local;
  return run_encoder(params, params.layout().tmpl,
                     params.hyper().template_vocab, tokens,
                     params.hyper().max_template_len, "template", t);
}

Matrix correlation(const Matrix& e_s, const Matrix& e_t) {
  if (e_s.cols != e_t.cols) {
    throw Error(ErrorKind::DimMismatch,
                "embedding widths differ: " + std::to_string(e_s.cols) +
                    " vs " + std::to_string(e_t.cols));
  }
  Matrix c;
  matmul_nt(e_s, e_t, c);
  return c;
}

PoolResult pool(const Matrix& e_s, const Matrix& e_t, const Matrix& c) {
  if (c.rows != e_s.rows || c.cols != e_t.rows || e_s.cols != e_t.cols) {
    throw Error(ErrorKind::DimMismatch, "correlation shape mismatch");
  }
  const int n = c.rows, m = c.cols, d = e_s.cols;
  PoolResult out;
  out.row_argmax.assign(n, 0);
  out.col_argmax.assign(m, 0);
  out.v_s.assign(d, 0.0);
  out.v_t.assign(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* cr = c.row(i);
    int best = 0;
    for (int j = 1; j < m; ++j) {
      if (cr[j] > cr[best]) best = j;
    }
    out.row_argmax[i] = best;
    const double w = cr[best];
    const double* er = e_s.row(i);
    for (int k = 0; k < d; ++k) out.v_s[k] += w * er[k];
  }
  for (double& v : out.v_s) v /= n;
  for (int j = 0; j < m; ++j) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (c.at(i, j) > c.at(best, j)) best = i;
    }
    out.col_argmax[j] = best;
    const double w = c.at(best, j);
    const double* er = e_t.row(j);
    for (int k = 0; k < d; ++k) out.v_t[k] += w * er[k];
  }
  for (double& v : out.v_t) v /= m;
  return out;
}

namespace {

double head_forward(const ModelParams& params, const std::vector<double>& v_s,
                    const std::vector<double>& v_t, double* logit_out) {
  const auto& layout = params.layout();
  const int d = params.hyper().d_model;
  const double* w = params.data(layout.head_w);
  double logit = 0.0;
  for (int k = 0; k < d; ++k) logit += w[k] * v_s[k];
  for (int k = 0; k < d; ++k) logit += w[d + k] * v_t[k];
  if (params.hyper().head_bias) logit += params.data(layout.head_b)[0];
  if (logit_out) *logit_out = logit;
  return 1.0 / (1.0 + std::exp(-logit));
}

}  // namespace

double score(const ModelParams& params, const std::vector<std::string>& tokens,
             const LinearTemplate& tmpl, ScoreTrace* trace) {
  ScoreTrace local;
  ScoreTrace& t = trace ? *trace : local;
  const Matrix e_s = encode_sentence(params, tokens, &t.sentence);
  const Matrix e_t = encode_template(params, tmpl, &t.tmpl);
  t.correlation = correlation(e_s, e_t);
  PoolResult pooled = pool(e_s, e_t, t.correlation);
  t.row_argmax = std::move(pooled.row_argmax);
  t.col_argmax = std::move(pooled.col_argmax);
  t.v_s = std::move(pooled.v_s);
  t.v_t = std::move(pooled.v_t);
  t.score = head_forward(params, t.v_s, t.v_t, &t.logit);
  t.param_hash = params.content_hash();
  return t.score;
}

double score_from_encodings(const ModelParams& params, const Matrix& e_s,
                            const Matrix& e_t) {
  const Matrix c = correlation(e_s, e_t);
  const PoolResult pooled = pool(e_s, e_t, c);
  return head_forward(params, pooled.v_s, pooled.v_t, nullptr);
}

// --- backward ---

namespace {

// Reverse pass of run_encoder. de is the gradient at the tower output e;
// accumulates parameter gradients and discards the input gradient (token
// embeddings are the leaves).
void encoder_backward(const ModelParams& params, const EncoderTensors& tensors,
                      const EncoderTrace& tr, const Matrix& de,
                      std::vector<double>& g) {
  const Hyper& h = params.hyper();
  const int d = h.d_model;
  const int seq = tr.x0.rows;
  const int hd = h.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // projection head of the tower
  Matrix d_proj_act;
  matmul_nt(de, as_matrix(params, tensors.proj_w2), d_proj_act);
  {
    Matrix dw;
    matmul_tn(tr.proj_act, de, dw);
    double* dst = g.data() + tensors.proj_w2.offset;
    for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
  }
  column_sums_add(de, g.data() + tensors.proj_b2.offset);
  for (std::size_t i = 0; i < d_proj_act.a.size(); ++i) {
    const double a = tr.proj_act.a[i];
    d_proj_act.a[i] *= 1.0 - a * a;  // tanh'
  }
  Matrix dh;
  matmul_nt(d_proj_act, as_matrix(params, tensors.proj_w1), dh);
  {
    Matrix dw;
    matmul_tn(tr.h, d_proj_act, dw);
    double* dst = g.data() + tensors.proj_w1.offset;
    for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
  }
  column_sums_add(d_proj_act, g.data() + tensors.proj_b1.offset);

  // final layer norm
  Matrix dx(seq, d);
  layer_norm_backward(dh, tr.lnf_xhat, tr.lnf_rstd,
                      params.data(tensors.lnf_gain), dx,
                      g.data() + tensors.lnf_gain.offset,
                      g.data() + tensors.lnf_bias.offset);

  for (int li = h.n_layers - 1; li >= 0; --li) {
    const auto& lt = tensors.layers[li];
    const auto& bt = tr.blocks[li];

    // feed-forward sub-block: x_out = x_attn + ff(ln2(x_attn))
    Matrix d_ff_act;
    matmul_nt(dx, as_matrix(params, lt.ff_w2), d_ff_act);
    {
      Matrix dw;
      matmul_tn(bt.ff_act, dx, dw);
      double* dst = g.data() + lt.ff_w2.offset;
      for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
    }
    column_sums_add(dx, g.data() + lt.ff_b2.offset);
    for (std::size_t i = 0; i < d_ff_act.a.size(); ++i) {
      const double a = bt.ff_act.a[i];
      d_ff_act.a[i] *= 1.0 - a * a;
    }
    Matrix d_ln2_out;
    matmul_nt(d_ff_act, as_matrix(params, lt.ff_w1), d_ln2_out);
    {
      Matrix dw;
      matmul_tn(bt.ln2_out, d_ff_act, dw);
      double* dst = g.data() + lt.ff_w1.offset;
      for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
    }
    column_sums_add(d_ff_act, g.data() + lt.ff_b1.offset);
    // residual: dx (gradient at x_attn) keeps its value and gains the
    // layer-norm path
    layer_norm_backward(d_ln2_out, bt.ln2_xhat, bt.ln2_rstd,
                        params.data(lt.ln2_gain), dx,
                        g.data() + lt.ln2_gain.offset,
                        g.data() + lt.ln2_bias.offset);

    // attention sub-block: x_attn = x_in + wo(concat(heads))
    Matrix d_concat;
    matmul_nt(dx, as_matrix(params, lt.wo), d_concat);
    {
      Matrix dw;
      matmul_tn(bt.attn_concat, dx, dw);
      double* dst = g.data() + lt.wo.offset;
      for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
    }
    column_sums_add(dx, g.data() + lt.bo.offset);

    Matrix dq(seq, d), dk(seq, d), dv(seq, d);
    for (int head = 0; head < h.n_heads; ++head) {
      const Matrix qh = head_slice(bt.q, head, hd);
      const Matrix kh = head_slice(bt.k, head, hd);
      const Matrix vh = head_slice(bt.v, head, hd);
      const Matrix d_oh = head_slice(d_concat, head, hd);
      const Matrix& p = bt.attn_probs[head];

      Matrix dp;
      matmul_nt(d_oh, vh, dp);
      Matrix dvh;
      matmul_tn(p, d_oh, dvh);

      // softmax backward, then undo the 1/sqrt(hd) scaling
      Matrix ds(seq, seq);
      for (int r = 0; r < seq; ++r) {
        const double* pr = p.row(r);
        const double* dpr = dp.row(r);
        double dot = 0.0;
        for (int c = 0; c < seq; ++c) dot += pr[c] * dpr[c];
        double* dsr = ds.row(r);
        for (int c = 0; c < seq; ++c) {
          dsr[c] = pr[c] * (dpr[c] - dot) * attn_scale;
        }
      }

      Matrix dqh;
      matmul(ds, kh, dqh);
      Matrix dkh;
      matmul_tn(ds, qh, dkh);

      head_scatter_add(dqh, head, hd, dq);
      head_scatter_add(dkh, head, hd, dk);
      head_scatter_add(dvh, head, hd, dv);
    }

    Matrix d_ln1_out;
    matmul_nt(dq, as_matrix(params, lt.wq), d_ln1_out);
    matmul_nt(dk, as_matrix(params, lt.wk), d_ln1_out, /*accumulate=*/true);
    matmul_nt(dv, as_matrix(params, lt.wv), d_ln1_out, /*accumulate=*/true);
    {
      Matrix dw;
      matmul_tn(bt.ln1_out, dq, dw);
      double* dst = g.data() + lt.wq.offset;
      for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
      matmul_tn(bt.ln1_out, dk, dw);
      dst = g.data() + lt.wk.offset;
      for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
      matmul_tn(bt.ln1_out, dv, dw);
      dst = g.data() + lt.wv.offset;
      for (std::size_t i = 0; i < dw.a.size(); ++i) dst[i] += dw.a[i];
    }
    column_sums_add(dq, g.data() + lt.bq.offset);
    column_sums_add(dk, g.data() + lt.bk.offset);
    column_sums_add(dv, g.data() + lt.bv.offset);

    layer_norm_backward(d_ln1_out, bt.ln1_xhat, bt.ln1_rstd,
                        params.data(lt.ln1_gain), dx,
                        g.data() + lt.ln1_gain.offset,
                        g.data() + lt.ln1_bias.offset);
  }

  // token embeddings (scaled by sqrt(d) in the forward pass)
  const double scale = std::sqrt(static_cast<double>(d));
  double* dembed = g.data() + tensors.embed.offset;
  for (int i = 0; i < seq; ++i) {
    double* row = dembed + static_cast<std::size_t>(tr.token_ids[i]) * d;
    const double* dxr = dx.row(i);
    for (int c = 0; c < d; ++c) row[c] += dxr[c] * scale;
  }
}

}  // namespace

void backward_into(const ModelParams& params, const ScoreTrace& trace,
                   double d_loss_d_score, Gradients& grads) {
  const auto& layout = params.layout();
  if (trace.param_hash != params.content_hash()) {
    throw Error(ErrorKind::TraceMismatch,
                "trace was recorded for different parameters");
  }
  if (grads.values.empty()) {
    grads.values.assign(layout.total, 0.0);
  } else if (grads.values.size() != layout.total) {
    throw Error(ErrorKind::DimMismatch, "gradient buffer has wrong size");
  }
  std::vector<double>& g = grads.values;
  const Hyper& h = params.hyper();
  const int d = h.d_model;
  const int n = trace.correlation.rows;
  const int m = trace.correlation.cols;
  const Matrix& e_s = trace.sentence.e;
  const Matrix& e_t = trace.tmpl.e;

  const double dlogit =
      d_loss_d_score * trace.score * (1.0 - trace.score);  // sigmoid'

  // scoring head
  const double* w = params.data(layout.head_w);
  double* dw = g.data() + layout.head_w.offset;
  std::vector<double> dv_s(d), dv_t(d);
  for (int k = 0; k < d; ++k) {
    dw[k] += dlogit * trace.v_s[k];
    dw[d + k] += dlogit * trace.v_t[k];
    dv_s[k] = dlogit * w[k];
    dv_t[k] = dlogit * w[d + k];
  }
  if (h.head_bias) g[layout.head_b.offset] += dlogit;

  // pooling: v_s = (1/n) sum_i c[i, ji*] e_s[i], mirrored for v_t. The max
  // routes its gradient to the stored argmax (lowest index on ties).
  Matrix de_s(n, d), de_t(m, d);
  Matrix dc(n, m);
  for (int i = 0; i < n; ++i) {
    const int j = trace.row_argmax[i];
    const double wmax = trace.correlation.at(i, j);
    const double* er = e_s.row(i);
    double* der = de_s.row(i);
    double dot = 0.0;
    for (int k = 0; k < d; ++k) {
      der[k] += (wmax / n) * dv_s[k];
      dot += dv_s[k] * er[k];
    }
    dc.at(i, j) += dot / n;
  }
  for (int j = 0; j < m; ++j) {
    const int i = trace.col_argmax[j];
    const double wmax = trace.correlation.at(i, j);
    const double* er = e_t.row(j);
    double* der = de_t.row(j);
    double dot = 0.0;
    for (int k = 0; k < d; ++k) {
      der[k] += (wmax / m) * dv_t[k];
      dot += dv_t[k] * er[k];
    }
    dc.at(i, j) += dot / m;
  }

  // correlation: c = e_s e_t^T. dc is sparse (one entry per row plus one
  // per column), which the zero-skipping matmuls exploit.
  matmul(dc, e_t, de_s, /*accumulate=*/true);
  matmul_tn(dc, e_s, de_t, /*accumulate=*/true);

  encoder_backward(params, layout.sentence, trace.sentence, de_s, g);
  encoder_backward(params, layout.tmpl, trace.tmpl, de_t, g);
}

Gradients backward(const ModelParams& params, const ScoreTrace& trace,
                   double d_loss_d_score) {
  Gradients grads;
  grads.values.assign(params.layout().total, 0.0);
  backward_into(params, trace, d_loss_d_score, grads);
  return grads;
}

// --- library cache ---

TemplateEncodingCache encode_library_serial(const ModelParams& params,
                                            const TemplateLibrary& lib) {
  TemplateEncodingCache cache;
  cache.param_hash = params.content_hash();
  cache.encodings.resize(lib.size());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    cache.encodings[i] =
        encode_template(params, lib.entries()[i].tokens, nullptr);
  }
  return cache;
}

TemplateEncodingCache encode_library(const ModelParams& params,
                                     const TemplateLibrary& lib, int threads) {
  TemplateEncodingCache cache;
  cache.param_hash = params.content_hash();
  cache.encodings.resize(lib.size());
  const int n = static_cast<int>(lib.size());
#ifdef _OPENMP
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 8) num_threads(nthreads)
  for (int i = 0; i < n; ++i) {
    cache.encodings[i] = encode_template(params, lib.entries()[i].tokens);
  }
#else
  (void)threads;
  for (int i = 0; i < n; ++i) {
    cache.encodings[i] = encode_template(params, lib.entries()[i].tokens);
  }
#endif
  return cache;
}

double score_with_cache(const ModelParams& params,
                        const std::vector<std::string>& tokens,
                        const TemplateEncodingCache& cache, int id) {
  if (cache.param_hash != params.content_hash()) {
    throw Error(ErrorKind::StaleCache,
                "template cache was built for different parameters");
  }
  if (id < 0 || static_cast<std::size_t>(id) >= cache.encodings.size()) {
    throw Error(ErrorKind::DimMismatch,
                "template id out of range: " + std::to_string(id));
  }
  const Matrix e_s = encode_sentence(params, tokens);
  return score_from_encodings(params, e_s, cache.encodings[id]);
}

// --- serialization ---

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor blobs are little-endian");

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t parse_hash_hex(const std::string& s) {
  return std::strtoull(s.c_str(), nullptr, 16);
}

void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, std::size_t count,
                  const char* what) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
    throw Error(ErrorKind::IoError, std::string("truncated ") + what);
  }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const Hyper& h = params.hyper();
  json header = {
      {"format", "syntempo-ckpt"},
      {"version", 1},
      {"hyper",
       {{"d_model", h.d_model},
        {"n_layers", h.n_layers},
        {"n_heads", h.n_heads},
        {"ffn_hidden", h.ffn_hidden},
        {"max_sentence_len", h.max_sentence_len},
        {"max_template_len", h.max_template_len},
        {"head_bias", h.head_bias}}},
      {"sentence_vocab", h.sentence_vocab.tokens()},
      {"template_vocab", h.template_vocab.tokens()},
      {"param_count", params.values().size()},
      {"param_hash", hash_hex(params.content_hash())},
  };
  std::ofstream out = open_output(path);
  out << header.dump() << "\n";
  write_doubles(out, params.values().data(), params.values().size());
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::IoError, "empty checkpoint: " + path);
  }
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::VersionMismatch,
                "unreadable checkpoint header: " + std::string(e.what()));
  }
  if (!header.is_object() || header.value("format", "") != "syntempo-ckpt") {
    throw Error(ErrorKind::VersionMismatch, "not a checkpoint: " + path);
  }
  if (header.value("version", 0) != 1) {
    throw Error(ErrorKind::VersionMismatch,
                "unsupported checkpoint version " +
                    header["version"].dump());
  }
  Hyper h;
  try {
    const json& hj = header.at("hyper");
    h.d_model = hj.at("d_model").get<int>();
    h.n_layers = hj.at("n_layers").get<int>();
    h.n_heads = hj.at("n_heads").get<int>();
    h.ffn_hidden = hj.at("ffn_hidden").get<int>();
    h.max_sentence_len = hj.at("max_sentence_len").get<int>();
    h.max_template_len = hj.at("max_template_len").get<int>();
    h.head_bias = hj.at("head_bias").get<bool>();
    h.sentence_vocab = Vocab::from_tokens(
        header.at("sentence_vocab").get<std::vector<std::string>>());
    h.template_vocab = Vocab::from_tokens(
        header.at("template_vocab").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::VersionMismatch,
                "malformed checkpoint header: " + std::string(e.what()));
  }
  h.validate();

  ModelParams params(h, /*init_seed=*/0);
  const std::size_t expected = params.layout().total;
  const std::size_t count = header.value("param_count", std::size_t{0});
  if (count != expected) {
    throw Error(ErrorKind::IoError,
                "checkpoint parameter count " + std::to_string(count) +
                    " does not match layout (" + std::to_string(expected) +
                    ")");
  }
  read_doubles(in, params.mutable_values().data(), expected, "checkpoint");
  const std::uint64_t want = parse_hash_hex(header.value("param_hash", ""));
  if (params.content_hash() != want) {
    throw Error(ErrorKind::IoError, "checkpoint tensor data is corrupted");
  }
  return params;
}

void save_cache(const TemplateEncodingCache& cache, const std::string& path) {
  json header = {
      {"format", "syntempo-cache"},
      {"version", 1},
      {"entries", cache.encodings.size()},
      {"param_hash", hash_hex(cache.param_hash)},
  };
  std::ofstream out = open_output(path);
  out << header.dump() << "\n";
  for (const Matrix& m : cache.encodings) {
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.rows),
                                   static_cast<std::uint32_t>(m.cols)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    write_doubles(out, m.a.data(), m.a.size());
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

TemplateEncodingCache load_cache(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::IoError, "empty cache file: " + path);
  }
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::VersionMismatch,
                "unreadable cache header: " + std::string(e.what()));
  }
  if (!header.is_object() || header.value("format", "") != "syntempo-cache") {
    throw Error(ErrorKind::VersionMismatch, "not a template cache: " + path);
  }
  if (header.value("version", 0) != 1) {
    throw Error(ErrorKind::VersionMismatch,
                "unsupported cache version " + header["version"].dump());
  }
  TemplateEncodingCache cache;
  cache.param_hash = parse_hash_hex(header.value("param_hash", ""));
  const std::size_t n = header.value("entries", std::size_t{0});
  cache.encodings.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (static_cast<std::size_t>(in.gcount()) != sizeof(dims)) {
      throw Error(ErrorKind::IoError, "truncated cache file");
    }
    Matrix m(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    read_doubles(in, m.a.data(), m.a.size(), "cache file");
    cache.encodings[i] = std::move(m);
  }
  return cache;
}

}  // namespace syntempo
