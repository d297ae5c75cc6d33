#include "mmtod/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mmtod {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <typename S>
MatrixT<S> zeros(Eigen::Index rows, Eigen::Index cols) {
  return MatrixT<S>::Zero(rows, cols);
}

template <typename S>
void layer_norm(const MatrixT<S>& x, const MatrixT<S>& gain, const MatrixT<S>& bias,
                MatrixT<S>& hat, VectorT<S>& rstd, MatrixT<S>& out) {
  const Eigen::Index n = x.rows();
  const S d = static_cast<S>(x.cols());
  hat.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const S mean = x.row(t).sum() / d;
    const S var = (x.row(t).array() - mean).square().sum() / d;
    rstd(t) = S(1) / std::sqrt(var + S(kLayerNormEps));
    hat.row(t) = (x.row(t).array() - mean) * rstd(t);
  }
  out = (hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

// Returns dx; accumulates gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dout, const Matrix& hat, const Eigen::VectorXd& rstd,
                           const Matrix& gain, Matrix& dgain, Matrix& dbias) {
  dgain.row(0) += (dout.array() * hat.array()).colwise().sum().matrix();
  dbias.row(0) += dout.colwise().sum();
  const Matrix dhat = (dout.array().rowwise() * gain.row(0).array()).matrix();
  const double d = static_cast<double>(dout.cols());
  Matrix dx(dout.rows(), dout.cols());
  for (Eigen::Index t = 0; t < dout.rows(); ++t) {
    const double mean_dhat = dhat.row(t).sum() / d;
    const double mean_dhat_hat = dhat.row(t).dot(hat.row(t)) / d;
    dx.row(t) = rstd(t) * (dhat.row(t).array() - mean_dhat - hat.row(t).array() * mean_dhat_hat).matrix();
  }
  return dx;
}

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::tanh(S(kGeluC) * (x + S(kGeluA) * x * x * x)));
}

double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

template <typename S>
void add_bias(MatrixT<S>& m, const MatrixT<S>& bias) {
  m.rowwise() += bias.row(0);
}

template <typename S>
struct HeadCache {
  RowVectorT<S> input, pre1, act1, pre2, act2, logits;
};

template <typename S>
HeadCache<S> head_forward(const BasicHeadParams<S>& h, const RowVectorT<S>& x) {
  HeadCache<S> c;
  c.input = x;
  c.pre1 = x * h.w1 + h.b1;
  c.act1 = c.pre1.cwiseMax(S(0));
  c.pre2 = c.act1 * h.w2 + h.b2;
  c.act2 = c.pre2.cwiseMax(S(0));
  c.logits = c.act2 * h.w3 + h.b3;
  return c;
}

RowVector head_backward(const HeadParams& h, const HeadCache<double>& c, const RowVector& dlogits,
                        HeadParams& g) {
  g.w3.noalias() += c.act2.transpose() * dlogits;
  g.b3 += dlogits;
  RowVector dact2 = dlogits * h.w3.transpose();
  RowVector dpre2 = (c.pre2.array() > 0.0).select(dact2, 0.0);
  g.w2.noalias() += c.act1.transpose() * dpre2;
  g.b2 += dpre2;
  RowVector dact1 = dpre2 * h.w2.transpose();
  RowVector dpre1 = (c.pre1.array() > 0.0).select(dact1, 0.0);
  g.w1.noalias() += c.input.transpose() * dpre1;
  g.b1 += dpre1;
  return dpre1 * h.w1.transpose();
}

template <typename Row>
auto log_sum_exp(const Row& v) {
  using S = typename Row::Scalar;
  const S m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

template <typename S>
RowVectorT<S> softmax_of(const RowVectorT<S>& logits) {
  const S m = logits.maxCoeff();
  RowVectorT<S> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

// d loss / d logits for a classification head.
RowVector classification_grad(const RowVector& logits, const ClassLabel& label, HeadKind head) {
  if (is_multi_label(head)) {
    return (sigmoid(logits).array() -
            Eigen::Map<const Eigen::Array<std::uint8_t, 1, Eigen::Dynamic>>(label.flags.data(),
                                                                         static_cast<Eigen::Index>(label.flags.size()))
                .cast<double>()) /
           static_cast<double>(logits.size());
  }
  RowVector g = softmax(logits);
  g(label.index) -= 1.0;
  return g;
}

template <typename S>
void check_label(const RowVectorT<S>& logits, const ClassLabel& label, HeadKind head) {
  if (is_multi_label(head)) {
    if (static_cast<Eigen::Index>(label.flags.size()) != logits.size())
      throw std::invalid_argument("multi-label target has " + std::to_string(label.flags.size()) +
                                  " flags for " + std::to_string(logits.size()) + " outputs");
  } else if (label.index < 0 || label.index >= logits.size()) {
    throw std::invalid_argument("class label " + std::to_string(label.index) + " out of range");
  }
}

template <typename S>
BasicForwardCache<S> forward_impl(const BasicParameters<S>& params, std::span<const int> tokens,
                                  std::span<const Segment> segments, const ModelConfig& cfg,
                                  bool last_logits_only) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (n == 0) throw std::invalid_argument("forward: empty sequence");
  if (segments.size() != tokens.size())
    throw std::invalid_argument("forward: token/segment length mismatch");
  if (n > cfg.max_seq_len)
    throw std::invalid_argument("forward: sequence of " + std::to_string(n) +
                                " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  const Eigen::Index d = cfg.model_dim;
  const int n_heads = cfg.n_heads;
  const Eigen::Index dh = cfg.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  BasicForwardCache<S> c;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.segments.assign(segments.begin(), segments.end());
  c.last_logits_only = last_logits_only;

  MatrixT<S> x(n, d);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int id = tokens[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg.vocab_size)
      throw std::invalid_argument("forward: token id " + std::to_string(id) + " out of range");
    x.row(t) = params.token_embedding.row(id) + params.position_embedding.row(t);
    if (cfg.use_segment_embedding)
      x.row(t) += params.segment_embedding.row(static_cast<int>(segments[static_cast<std::size_t>(t)]));
  }

  c.layers.resize(params.layers.size());
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const BasicLayerParams<S>& L = params.layers[li];
    BasicLayerCache<S>& lc = c.layers[li];
    lc.input = x;
    layer_norm<S>(x, L.ln1_gain, L.ln1_bias, lc.ln1_hat, lc.ln1_rstd, lc.ln1_out);
    lc.qkv.noalias() = lc.ln1_out * L.qkv_weight;
    lc.qkv.leftCols(d).rowwise() += L.q_bias.row(0);
    lc.qkv.rightCols(d).rowwise() += L.v_bias.row(0);

    lc.attn.assign(static_cast<std::size_t>(n_heads), MatrixT<S>());
    lc.attn_out = zeros<S>(n, d);
    for (int h = 0; h < n_heads; ++h) {
      const auto q = lc.qkv.middleCols(h * dh, dh);
      const auto k = lc.qkv.middleCols(d + h * dh, dh);
      const auto v = lc.qkv.middleCols(2 * d + h * dh, dh);
      MatrixT<S>& p = lc.attn[static_cast<std::size_t>(h)];
      p = zeros<S>(n, n);
      // Row t reads only rows <= t so earlier outputs never see later tokens.
      for (Eigen::Index t = 0; t < n; ++t) {
        RowVectorT<S> s = (q.row(t) * k.topRows(t + 1).transpose()) * scale;
        p.row(t).head(t + 1) = softmax_of<S>(s);
        lc.attn_out.row(t).segment(h * dh, dh).noalias() = p.row(t).head(t + 1) * v.topRows(t + 1);
      }
    }
    lc.mid = lc.input;
    lc.mid.noalias() += lc.attn_out * L.proj_weight;
    add_bias<S>(lc.mid, L.proj_bias);

    layer_norm<S>(lc.mid, L.ln2_gain, L.ln2_bias, lc.ln2_hat, lc.ln2_rstd, lc.ln2_out);
    lc.fc_pre.noalias() = lc.ln2_out * L.fc_weight;
    add_bias<S>(lc.fc_pre, L.fc_bias);
    lc.fc_act = lc.fc_pre.unaryExpr([](S v) { return gelu<S>(v); });
    x = lc.mid;
    x.noalias() += lc.fc_act * L.out_weight;
    add_bias<S>(x, L.out_bias);
  }
  layer_norm<S>(x, params.final_gain, params.final_bias, c.final_hat, c.final_rstd, c.hidden);
  if (last_logits_only)
    c.logits.noalias() = c.hidden.bottomRows(1) * params.token_embedding.transpose();
  else
    c.logits.noalias() = c.hidden * params.token_embedding.transpose();
  return c;
}

template <typename S, typename Logits>
S lm_loss_impl(const Logits& logits, std::span<const int> targets,
               std::span<const std::uint8_t> mask) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size() || targets.size() != mask.size())
    throw std::invalid_argument("lm_loss: logits/targets/mask length mismatch");
  S total = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask[t]) continue;
    const RowVectorT<S> row = logits.row(static_cast<Eigen::Index>(t));
    const int y = targets[t];
    if (y < 0 || y >= row.size())
      throw std::invalid_argument("lm_loss: target id " + std::to_string(y) + " out of range");
    total += log_sum_exp(row) - row(y);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("lm_loss: every position is masked");
  return total / static_cast<S>(count);
}

template <typename S>
S classification_loss_impl(const RowVectorT<S>& logits, const ClassLabel& label, HeadKind head) {
  check_label<S>(logits, label, head);
  if (is_multi_label(head)) {
    S total = 0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      const S z = logits(i);
      const S y = label.flags[static_cast<std::size_t>(i)] ? S(1) : S(0);
      total += std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    return total / static_cast<S>(logits.size());
  }
  return log_sum_exp(logits) - logits(label.index);
}

template <typename S>
S loss_impl(const BasicParameters<S>& params, const BasicForwardCache<S>& cache,
            const LossTarget& target) {
  if (const auto* lm = std::get_if<LmTarget>(&target)) {
    if (cache.last_logits_only) throw std::invalid_argument("loss: cache lacks full logits");
    const auto m = static_cast<Eigen::Index>(lm->targets.size());
    if (m > cache.logits.rows()) throw std::invalid_argument("loss: LM target length mismatch");
    return lm_loss_impl<S>(cache.logits.topRows(m), lm->targets, lm->mask);
  }
  const auto& ct = std::get<ClassTarget>(target);
  if (static_cast<Eigen::Index>(ct.position) >= cache.hidden.rows())
    throw std::invalid_argument("loss: classifier position out of range");
  const RowVectorT<S> logits =
      head_forward<S>(params.heads[static_cast<std::size_t>(ct.head)],
                      cache.hidden.row(static_cast<Eigen::Index>(ct.position)))
          .logits;
  return classification_loss_impl<S>(logits, ct.label, ct.head);
}

}  // namespace

std::string_view head_name(HeadKind head) {
  switch (head) {
    case HeadKind::FurnitureAction: return "furniture_action";
    case HeadKind::FurnitureAttribute: return "furniture_attribute";
    case HeadKind::FashionAction: return "fashion_action";
    case HeadKind::FashionAttribute: return "fashion_attribute";
  }
  return "?";
}

HeadKind action_head(Domain domain) {
  return domain == Domain::Furniture ? HeadKind::FurnitureAction : HeadKind::FashionAction;
}

HeadKind attribute_head(Domain domain) {
  return domain == Domain::Furniture ? HeadKind::FurnitureAttribute : HeadKind::FashionAttribute;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (vocab_size < 1) fail("vocab_size must be positive");
  if (model_dim < 4) fail("model_dim must be at least 4");
  if (n_layers < 1) fail("n_layers must be positive");
  if (n_heads < 1) fail("n_heads must be positive");
  if (model_dim % n_heads != 0) fail("model_dim must be divisible by n_heads");
  if (model_dim % 4 != 0) fail("model_dim must be divisible by 4");
  if (max_seq_len < 2) fail("max_seq_len must be at least 2");
  if (!(init_std >= 0.0)) fail("init_std must be non-negative");
  for (int c : head_classes)
    if (c < 1) fail("head_classes must be positive");
}

// ---- parameters -----------------------------------------------------------

template <typename S>
BasicParameters<S> BasicParameters<S>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.model_dim;
  BasicParameters p;
  p.token_embedding = mmtod::zeros<S>(cfg.vocab_size, d);
  p.segment_embedding = mmtod::zeros<S>(kNumSegments, d);
  p.position_embedding = mmtod::zeros<S>(cfg.max_seq_len, d);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.ln1_gain = mmtod::zeros<S>(1, d);
    l.ln1_bias = mmtod::zeros<S>(1, d);
    l.qkv_weight = mmtod::zeros<S>(d, 3 * d);
    l.q_bias = mmtod::zeros<S>(1, d);
    l.v_bias = mmtod::zeros<S>(1, d);
    l.proj_weight = mmtod::zeros<S>(d, d);
    l.proj_bias = mmtod::zeros<S>(1, d);
    l.ln2_gain = mmtod::zeros<S>(1, d);
    l.ln2_bias = mmtod::zeros<S>(1, d);
    l.fc_weight = mmtod::zeros<S>(d, 4 * d);
    l.fc_bias = mmtod::zeros<S>(1, 4 * d);
    l.out_weight = mmtod::zeros<S>(4 * d, d);
    l.out_bias = mmtod::zeros<S>(1, d);
  }
  p.final_gain = mmtod::zeros<S>(1, d);
  p.final_bias = mmtod::zeros<S>(1, d);
  for (int h = 0; h < kNumHeads; ++h) {
    BasicHeadParams<S>& hp = p.heads[static_cast<std::size_t>(h)];
    hp.w1 = mmtod::zeros<S>(d, d / 2);
    hp.b1 = mmtod::zeros<S>(1, d / 2);
    hp.w2 = mmtod::zeros<S>(d / 2, d / 4);
    hp.b2 = mmtod::zeros<S>(1, d / 4);
    hp.w3 = mmtod::zeros<S>(d / 4, cfg.head_classes[static_cast<std::size_t>(h)]);
    hp.b3 = mmtod::zeros<S>(1, cfg.head_classes[static_cast<std::size_t>(h)]);
  }
  return p;
}

template <typename S>
BasicParameters<S> BasicParameters<S>::init(const ModelConfig& cfg, std::uint64_t seed) {
  BasicParameters p = zeros(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  for (auto& [name, m] : p.tensors()) {
    const bool is_gain = name.ends_with("gain");
    const bool is_bias = name.ends_with("bias") || name.ends_with(".b1") ||
                         name.ends_with(".b2") || name.ends_with(".b3");
    if (is_gain) {
      m->setOnes();
    } else if (name.starts_with("heads.") && !is_bias) {
      // Fan-in uniform: three stacked 0.02 layers barely pass a signal.
      const double bound = 1.0 / std::sqrt(static_cast<double>(m->rows()));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = static_cast<S>(uniform(rng));
    } else if (!is_bias) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = static_cast<S>(normal(rng));
    }
  }
  return p;
}

template <typename S>
std::vector<std::pair<std::string, const MatrixT<S>*>> BasicParameters<S>::tensors() const {
  std::vector<std::pair<std::string, const MatrixT<S>*>> out;
  out.emplace_back("token_embedding", &token_embedding);
  out.emplace_back("segment_embedding", &segment_embedding);
  out.emplace_back("position_embedding", &position_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const BasicLayerParams<S>& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "ln1.gain", &l.ln1_gain);
    out.emplace_back(p + "ln1.bias", &l.ln1_bias);
    out.emplace_back(p + "attn.qkv.weight", &l.qkv_weight);
    out.emplace_back(p + "attn.q.bias", &l.q_bias);
    out.emplace_back(p + "attn.v.bias", &l.v_bias);
    out.emplace_back(p + "attn.proj.weight", &l.proj_weight);
    out.emplace_back(p + "attn.proj.bias", &l.proj_bias);
    out.emplace_back(p + "ln2.gain", &l.ln2_gain);
    out.emplace_back(p + "ln2.bias", &l.ln2_bias);
    out.emplace_back(p + "mlp.fc.weight", &l.fc_weight);
    out.emplace_back(p + "mlp.fc.bias", &l.fc_bias);
    out.emplace_back(p + "mlp.out.weight", &l.out_weight);
    out.emplace_back(p + "mlp.out.bias", &l.out_bias);
  }
  out.emplace_back("final_ln.gain", &final_gain);
  out.emplace_back("final_ln.bias", &final_bias);
  for (int h = 0; h < kNumHeads; ++h) {
    const BasicHeadParams<S>& hp = heads[static_cast<std::size_t>(h)];
    const std::string p = "heads." + std::string(head_name(static_cast<HeadKind>(h))) + ".";
    out.emplace_back(p + "w1", &hp.w1);
    out.emplace_back(p + "b1", &hp.b1);
    out.emplace_back(p + "w2", &hp.w2);
    out.emplace_back(p + "b2", &hp.b2);
    out.emplace_back(p + "w3", &hp.w3);
    out.emplace_back(p + "b3", &hp.b3);
  }
  return out;
}

template <typename S>
std::vector<std::pair<std::string, MatrixT<S>*>> BasicParameters<S>::tensors() {
  std::vector<std::pair<std::string, MatrixT<S>*>> out;
  for (auto& [name, m] : std::as_const(*this).tensors())
    out.emplace_back(std::move(name), const_cast<MatrixT<S>*>(m));
  return out;
}

template <typename S>
template <typename T>
BasicParameters<T> BasicParameters<S>::cast() const {
  BasicParameters<T> out;
  out.layers.resize(layers.size());
  auto dst = out.tensors();
  const auto src = tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
  return out;
}

template <typename S>
void BasicParameters<S>::set_zero() {
  for (auto& [name, m] : tensors()) m->setZero();
}

template <typename S>
bool BasicParameters<S>::all_finite() const {
  for (const auto& [name, m] : tensors())
    if (!m->allFinite()) return false;
  return true;
}

template <typename S>
S BasicParameters<S>::squared_norm() const {
  S s = 0;
  for (const auto& [name, m] : tensors()) s += m->squaredNorm();
  return s;
}

template <typename S>
std::size_t BasicParameters<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

template <typename S>
bool BasicParameters<S>::operator==(const BasicParameters& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].second->rows() != b[i].second->rows() || a[i].second->cols() != b[i].second->cols())
      return false;
    if (*a[i].second != *b[i].second) return false;
  }
  return true;
}

template struct BasicParameters<double>;
template struct BasicParameters<long double>;
template BasicParameters<long double> BasicParameters<double>::cast<long double>() const;

// ---- forward --------------------------------------------------------------

RowVector softmax(const RowVector& logits) { return softmax_of<double>(logits); }

RowVector sigmoid(const RowVector& logits) {
  return logits.unaryExpr([](double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  });
}

ForwardCache forward(const Parameters& params, std::span<const int> tokens,
                     std::span<const Segment> segments, const ModelConfig& cfg,
                     bool last_logits_only) {
  return forward_impl<double>(params, tokens, segments, cfg, last_logits_only);
}

RowVector classifier_forward(const HeadParams& head, const RowVector& hidden) {
  return head_forward<double>(head, hidden).logits;
}

// ---- losses ---------------------------------------------------------------

double lm_loss(const Matrix& logits, std::span<const int> targets,
               std::span<const std::uint8_t> mask) {
  return lm_loss_impl<double>(logits, targets, mask);
}

double classification_loss(const RowVector& logits, const ClassLabel& label, HeadKind head) {
  return classification_loss_impl<double>(logits, label, head);
}

LmTarget lm_target(const SerializedExample& ex) {
  LmTarget t;
  t.targets.assign(ex.tokens.begin() + 1, ex.tokens.end());
  t.mask.assign(ex.loss_mask.begin() + 1, ex.loss_mask.end());
  return t;
}

ClassTarget action_target(const SerializedExample& ex) {
  return {action_head(ex.domain), ex.eob_index, {ex.action_label, {}}};
}

ClassTarget attribute_target(const SerializedExample& ex) {
  ClassTarget t{attribute_head(ex.domain), ex.eob_index, {}};
  if (ex.domain == Domain::Furniture)
    t.label.index = ex.attribute_label;
  else
    t.label.flags = ex.attribute_flags;
  return t;
}

double loss(const Parameters& params, const ForwardCache& cache, const LossTarget& target) {
  return loss_impl<double>(params, cache, target);
}

// ---- backward -------------------------------------------------------------

double backward(const Parameters& params, const ForwardCache& cache, const LossTarget& target,
                const ModelConfig& cfg, Parameters& grads, double scale) {
  const auto n = static_cast<Eigen::Index>(cache.tokens.size());
  const Eigen::Index d = cfg.model_dim;
  const Eigen::Index dh = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (cache.hidden.rows() != n || cache.hidden.cols() != d || cache.layers.size() != params.layers.size())
    throw std::invalid_argument("backward: cache does not match the parameters");

  Matrix dhidden = zeros<double>(n, d);
  double value = 0.0;
  if (const auto* lm = std::get_if<LmTarget>(&target)) {
    if (cache.last_logits_only) throw std::invalid_argument("backward: cache lacks full logits");
    const auto m = static_cast<Eigen::Index>(lm->targets.size());
    if (m > n || lm->mask.size() != lm->targets.size())
      throw std::invalid_argument("backward: LM target length mismatch");
    value = lm_loss_impl<double>(cache.logits.topRows(m), lm->targets, lm->mask);
    const auto count = static_cast<double>(std::count_if(lm->mask.begin(), lm->mask.end(),
                                                          [](std::uint8_t b) { return b != 0; }));
    Matrix dlogits = zeros<double>(n, cfg.vocab_size);
    for (Eigen::Index t = 0; t < m; ++t) {
      if (!lm->mask[static_cast<std::size_t>(t)]) continue;
      dlogits.row(t) = softmax(cache.logits.row(t));
      dlogits(t, lm->targets[static_cast<std::size_t>(t)]) -= 1.0;
    }
    dlogits *= scale / count;
    dhidden.noalias() = dlogits * params.token_embedding;
    grads.token_embedding.noalias() += dlogits.transpose() * cache.hidden;
  } else {
    const auto& ct = std::get<ClassTarget>(target);
    if (static_cast<Eigen::Index>(ct.position) >= n)
      throw std::invalid_argument("backward: classifier position out of range");
    const auto hi = static_cast<std::size_t>(ct.head);
    const HeadCache<double> hc = head_forward<double>(params.heads[hi], cache.hidden.row(static_cast<Eigen::Index>(ct.position)));
    value = classification_loss(hc.logits, ct.label, ct.head);
    const RowVector dlogits = classification_grad(hc.logits, ct.label, ct.head) * scale;
    dhidden.row(static_cast<Eigen::Index>(ct.position)) =
        head_backward(params.heads[hi], hc, dlogits, grads.heads[hi]);
  }

  Matrix dx = layer_norm_backward(dhidden, cache.final_hat, cache.final_rstd, params.final_gain,
                                  grads.final_gain, grads.final_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams& L = params.layers[li];
    const BasicLayerCache<double>& lc = cache.layers[li];
    LayerParams& G = grads.layers[li];

    // MLP branch: x = mid + gelu(ln2(mid) W_fc + b_fc) W_out + b_out
    G.out_weight.noalias() += lc.fc_act.transpose() * dx;
    G.out_bias.row(0) += dx.colwise().sum();
    Matrix dact = dx * L.out_weight.transpose();
    Matrix dpre = dact.cwiseProduct(lc.fc_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    G.fc_weight.noalias() += lc.ln2_out.transpose() * dpre;
    G.fc_bias.row(0) += dpre.colwise().sum();
    Matrix dln2 = dpre * L.fc_weight.transpose();
    Matrix dmid = dx + layer_norm_backward(dln2, lc.ln2_hat, lc.ln2_rstd, L.ln2_gain, G.ln2_gain,
                                           G.ln2_bias);

    // Attention branch: mid = input + attn(ln1(input)) W_proj + b_proj
    G.proj_weight.noalias() += lc.attn_out.transpose() * dmid;
    G.proj_bias.row(0) += dmid.colwise().sum();
    Matrix dattn = dmid * L.proj_weight.transpose();
    Matrix dqkv = zeros<double>(n, 3 * d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto q = lc.qkv.middleCols(h * dh, dh);
      const auto k = lc.qkv.middleCols(d + h * dh, dh);
      const auto v = lc.qkv.middleCols(2 * d + h * dh, dh);
      const Matrix& p = lc.attn[static_cast<std::size_t>(h)];
      const auto dout = dattn.middleCols(h * dh, dh);
      dqkv.middleCols(2 * d + h * dh, dh).noalias() += p.transpose() * dout;
      Matrix dp = dout * v.transpose();
      Matrix ds = zeros<double>(n, n);
      for (Eigen::Index t = 0; t < n; ++t) {
        const auto pr = p.row(t).head(t + 1);
        const auto dpr = dp.row(t).head(t + 1);
        const double inner = pr.dot(dpr);
        ds.row(t).head(t + 1) = pr.cwiseProduct((dpr.array() - inner).matrix());
      }
      ds *= att_scale;
      dqkv.middleCols(h * dh, dh).noalias() += ds * k;
      dqkv.middleCols(d + h * dh, dh).noalias() += ds.transpose() * q;
    }
    G.qkv_weight.noalias() += lc.ln1_out.transpose() * dqkv;
    G.q_bias.row(0) += dqkv.leftCols(d).colwise().sum();
    G.v_bias.row(0) += dqkv.rightCols(d).colwise().sum();
    Matrix dln1 = dqkv * L.qkv_weight.transpose();
    dx = dmid + layer_norm_backward(dln1, lc.ln1_hat, lc.ln1_rstd, L.ln1_gain, G.ln1_gain,
                                    G.ln1_bias);
  }

  for (Eigen::Index t = 0; t < n; ++t) {
    grads.token_embedding.row(cache.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    grads.position_embedding.row(t) += dx.row(t);
    if (cfg.use_segment_embedding)
      grads.segment_embedding.row(static_cast<int>(cache.segments[static_cast<std::size_t>(t)])) += dx.row(t);
  }
  return value;
}

// ---- finite-difference check ---------------------------------------------

GradCheckResult grad_check(const ModelConfig& cfg, std::uint64_t seed, LossPath path,
                           std::size_t per_tensor) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Parameters params = Parameters::init(cfg, seed);
  // Random gains/biases so every tensor kind carries a generic gradient.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& [name, m] : params.tensors()) {
    if (name.ends_with("gain") || name.ends_with("bias") || name.ends_with(".b1") ||
        name.ends_with(".b2") || name.ends_with(".b3"))
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += jitter(rng);
  }

  const std::size_t n = static_cast<std::size_t>(std::min(12, cfg.max_seq_len));
  if (n < 2) throw std::invalid_argument("grad_check: max_seq_len must be at least 2");
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  std::uniform_int_distribution<int> seg(0, kNumSegments - 1);
  std::vector<int> tokens(n);
  std::vector<Segment> segments(n);
  for (std::size_t i = 0; i < n; ++i) {
    tokens[i] = tok(rng);
    segments[i] = static_cast<Segment>(seg(rng));
  }

  LossTarget target;
  const std::size_t position = n / 2;
  auto class_target = [&](HeadKind head) {
    ClassTarget t{head, position, {}};
    const int classes = cfg.head_classes[static_cast<std::size_t>(head)];
    if (is_multi_label(head)) {
      std::bernoulli_distribution coin(0.5);
      for (int i = 0; i < classes; ++i) t.label.flags.push_back(coin(rng) ? 1 : 0);
    } else {
      t.label.index = std::uniform_int_distribution<int>(0, classes - 1)(rng);
    }
    return t;
  };
  switch (path) {
    case LossPath::Lm: {
      LmTarget lm;
      std::bernoulli_distribution keep(0.7);
      for (std::size_t i = 1; i < n; ++i) {
        lm.targets.push_back(tokens[i]);
        lm.mask.push_back(keep(rng) ? 1 : 0);
      }
      lm.mask[lm.mask.size() - 1] = 1;
      target = lm;
      break;
    }
    case LossPath::FurnitureAction: target = class_target(HeadKind::FurnitureAction); break;
    case LossPath::FurnitureAttribute: target = class_target(HeadKind::FurnitureAttribute); break;
    case LossPath::FashionAction: target = class_target(HeadKind::FashionAction); break;
    case LossPath::FashionAttribute: target = class_target(HeadKind::FashionAttribute); break;
  }

  Parameters grads = Parameters::zeros(cfg);
  backward(params, forward(params, tokens, segments, cfg), target, cfg, grads);

  // The oracle perturbs an extended-precision replica; the step is the same.
  BasicParameters<long double> wide = params.cast<long double>();
  auto eval = [&] {
    return loss_impl<long double>(wide, forward_impl<long double>(wide, tokens, segments, cfg, false),
                                  target);
  };
  constexpr long double eps = 1e-5L;
  GradCheckResult result;
  auto ptensors = wide.tensors();
  auto gtensors = grads.tensors();
  for (std::size_t ti = 0; ti < ptensors.size(); ++ti) {
    MatrixT<long double>& p = *ptensors[ti].second;
    const Matrix& g = *gtensors[ti].second;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(p.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<Eigen::Index>(i);
    if (per_tensor > 0 && coords.size() > per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_tensor);
    }
    for (Eigen::Index i : coords) {
      const long double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const long double plus = eval();
      p.data()[i] = saved - eps;
      const long double minus = eval();
      p.data()[i] = saved;
      const auto fd = static_cast<double>((plus - minus) / (2.0L * eps));
      const double analytic = g.data()[i];
      const double rel = std::abs(analytic - fd) / std::max(1e-8, std::abs(analytic) + std::abs(fd));
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = ptensors[ti].first;
      }
    }
  }
  return result;
}

}  // namespace mmtod
