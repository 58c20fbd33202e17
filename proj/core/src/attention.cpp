#include "coopdet/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "coopdet/rng.hpp"

namespace coopdet {

namespace {

constexpr double kNormFloor = 1e-150;  // below this a norm counts as zero

std::vector<double> mean_pool(const PseudoImage& image) {
  if (image.channels < 1 || image.height < 1 || image.width < 1)
    throw std::invalid_argument("cannot pool an empty image");
  const size_t plane = static_cast<size_t>(image.height) * image.width;
  std::vector<double> pooled(image.channels, 0.0);
  for (int c = 0; c < image.channels; ++c) {
    double acc = 0.0;
    const float* p = &image.data[c * plane];
    for (size_t i = 0; i < plane; ++i) acc += p[i];
    pooled[c] = acc / static_cast<double>(plane);
  }
  return pooled;
}

std::vector<double> project(const std::vector<double>& v, const Matrix& m) {
  if (m.cols != static_cast<int>(v.size()))
    throw std::invalid_argument("projection width does not match channel count");
  std::vector<double> out(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += m.at(r, c) * v[c];
    out[r] = acc;
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

QueryVector encode_query(const PseudoImage& image, const Matrix& projection) {
  return project(mean_pool(image), projection);
}

KeyVector encode_key(const PseudoImage& image, const Matrix& projection) {
  return project(mean_pool(image), projection);
}

namespace {

// u = q^T W, shared by score and gradient.
std::vector<double> left_product(const QueryVector& q, const Matrix& w) {
  if (w.rows != static_cast<int>(q.size()))
    throw std::invalid_argument("query size does not match w_a rows");
  std::vector<double> u(w.cols, 0.0);
  for (int r = 0; r < w.rows; ++r) {
    const double qv = q[r];
    for (int c = 0; c < w.cols; ++c) u[c] += qv * w.at(r, c);
  }
  return u;
}

}  // namespace

double matching_score(const QueryVector& query, const KeyVector& key,
                      const Matrix& w_a, bool* degenerate) {
  if (w_a.cols != static_cast<int>(key.size()))
    throw std::invalid_argument("key size does not match w_a columns");
  const std::vector<double> u = left_product(query, w_a);
  const double nu = norm(u), nk = norm(key);
  if (degenerate) *degenerate = false;
  if (nu < kNormFloor || nk < kNormFloor) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  double dot = 0.0;
  for (size_t i = 0; i < key.size(); ++i) dot += u[i] * key[i];
  return dot / (nu * nk);
}

Matrix score_gradient(const QueryVector& query, const KeyVector& key,
                      const Matrix& w_a) {
  if (w_a.cols != static_cast<int>(key.size()))
    throw std::invalid_argument("key size does not match w_a columns");
  const std::vector<double> u = left_product(query, w_a);
  const double nu = norm(u), nk = norm(key);
  if (nu < kNormFloor || nk < kNormFloor)
    throw std::invalid_argument("score gradient undefined for zero-norm inputs");
  double dot = 0.0;
  for (size_t i = 0; i < key.size(); ++i) dot += u[i] * key[i];
  const double t = dot / (nu * nk);

  Matrix g(w_a.rows, w_a.cols);
  for (int c = 0; c < w_a.cols; ++c) {
    const double du = key[c] / (nu * nk) - t * u[c] / (nu * nu);
    for (int r = 0; r < w_a.rows; ++r) g.at(r, c) = query[r] * du;
  }
  return g;
}

ScoreSet normalize_scores(std::vector<double> raw, std::vector<int> ids) {
  if (raw.empty()) throw std::invalid_argument("cannot normalize an empty score set");
  for (double v : raw)
    if (!std::isfinite(v)) throw std::invalid_argument("scores must be finite");
  if (ids.empty()) {
    ids.resize(raw.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  } else if (ids.size() != raw.size()) {
    throw std::invalid_argument("ids must parallel the raw scores");
  }

  const double mx = *std::max_element(raw.begin(), raw.end());
  std::vector<double> weights(raw.size());
  double total = 0.0;
  for (size_t i = 0; i < raw.size(); ++i) {
    weights[i] = std::exp(raw[i] - mx);
    total += weights[i];
  }
  for (double& w : weights) w /= total;

  ScoreSet out;
  out.raw = std::move(raw);
  out.normalized = std::move(weights);
  out.ids = std::move(ids);
  return out;
}

int select_infrastructure(const ScoreSet& scores) {
  if (scores.raw.empty())
    throw std::invalid_argument("cannot select from an empty score set");
  size_t best = 0;
  for (size_t i = 1; i < scores.raw.size(); ++i) {
    if (scores.raw[i] > scores.raw[best] ||
        (scores.raw[i] == scores.raw[best] && scores.ids[i] < scores.ids[best]))
      best = i;
  }
  return scores.ids[best];
}

PseudoImage refine_feature(const PseudoImage& image, double weight) {
  PseudoImage out = image;
  const float w = static_cast<float>(weight);
  for (float& v : out.data) v *= w;
  return out;
}

namespace {

void check_same_shape(const PseudoImage& a, const PseudoImage& b, const char* what) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width)
    throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

}  // namespace

PseudoImage fuse_inference(const PseudoImage& local, const PseudoImage& refined) {
  check_same_shape(local, refined, "fuse_inference");
  PseudoImage out(local.channels * 2, local.height, local.width);
  std::copy(local.data.begin(), local.data.end(), out.data.begin());
  std::copy(refined.data.begin(), refined.data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(local.data.size()));
  return out;
}

PseudoImage fuse_training(const PseudoImage& local,
                          const std::vector<PseudoImage>& infra,
                          const ScoreSet& scores) {
  if (infra.size() != scores.normalized.size())
    throw std::invalid_argument("one weight per infrastructure image required");
  if (infra.empty())
    throw std::invalid_argument("training fusion needs at least one responder");
  for (const auto& img : infra) check_same_shape(local, img, "fuse_training");

  PseudoImage out(local.channels * 2, local.height, local.width);
  std::copy(local.data.begin(), local.data.end(), out.data.begin());
  const size_t n = local.data.size();
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (size_t k = 0; k < infra.size(); ++k)
      acc += scores.normalized[k] * static_cast<double>(infra[k].data[i]);
    out.data[n + i] = static_cast<float>(acc);
  }
  return out;
}

TrainResult train_attention(const std::vector<AttentionSample>& dataset,
                            Matrix w0, double learning_rate, int epochs) {
  if (dataset.empty()) throw std::invalid_argument("empty training set");
  if (epochs < 0) throw std::invalid_argument("negative epoch count");
  for (const auto& s : dataset) {
    if (s.keys.empty() || s.label < 0 || s.label >= static_cast<int>(s.keys.size()))
      throw std::invalid_argument("sample label outside its key set");
  }

  TrainResult result;
  result.w = std::move(w0);
  result.loss.reserve(epochs);
  const double inv_n = 1.0 / static_cast<double>(dataset.size());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix grad(result.w.rows, result.w.cols);
    double loss = 0.0;
    for (const auto& sample : dataset) {
      std::vector<double> raw(sample.keys.size());
      std::vector<bool> bad(sample.keys.size());
      for (size_t i = 0; i < sample.keys.size(); ++i) {
        bool flag = false;
        raw[i] = matching_score(sample.query, sample.keys[i], result.w, &flag);
        bad[i] = flag;
      }
      const ScoreSet scores = normalize_scores(raw);
      loss -= std::log(scores.normalized[sample.label]);
      for (size_t i = 0; i < sample.keys.size(); ++i) {
        if (bad[i]) continue;  // constant score, no gradient
        const double coeff =
            scores.normalized[i] - (static_cast<int>(i) == sample.label ? 1.0 : 0.0);
        const Matrix g = score_gradient(sample.query, sample.keys[i], result.w);
        for (size_t k = 0; k < grad.data.size(); ++k)
          grad.data[k] += coeff * g.data[k];
      }
    }
    result.loss.push_back(loss * inv_n);
    for (size_t k = 0; k < grad.data.size(); ++k)
      result.w.data[k] -= learning_rate * inv_n * grad.data[k];
  }
  return result;
}

double selection_accuracy(const std::vector<AttentionSample>& dataset,
                          const Matrix& w_a) {
  if (dataset.empty()) throw std::invalid_argument("empty validation set");
  int hits = 0;
  for (const auto& sample : dataset) {
    std::vector<double> raw(sample.keys.size());
    for (size_t i = 0; i < sample.keys.size(); ++i)
      raw[i] = matching_score(sample.query, sample.keys[i], w_a);
    const ScoreSet scores = normalize_scores(raw);
    if (select_infrastructure(scores) == sample.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

void AttentionState::validate() const {
  if (w_a.rows < 1 || w_a.cols < 1)
    throw std::invalid_argument("w_a must be non-empty");
  if (query_proj.rows != w_a.rows)
    throw std::invalid_argument("query projection rows must match w_a rows");
  if (key_proj.rows != w_a.cols)
    throw std::invalid_argument("key projection rows must match w_a columns");
  if (query_proj.cols != key_proj.cols)
    throw std::invalid_argument("projections must share the channel count");
}

AttentionState seeded_attention_state(int m_mu, int m_psi, int channels,
                                      uint64_t seed) {
  if (m_mu < 1 || m_psi < 1 || channels < 1)
    throw std::invalid_argument("attention dimensions must be positive");
  AttentionState st;
  SplitMix64 rng(seed);
  auto fill = [&rng](Matrix& m, int rows, int cols, double fan_in) {
    m = Matrix(rows, cols);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (double& v : m.data) v = rng.uniform(-bound, bound);
  };
  fill(st.w_a, m_mu, m_psi, m_mu);
  fill(st.query_proj, m_mu, channels, channels);
  fill(st.key_proj, m_psi, channels, channels);
  st.validate();
  return st;
}

void save_attention_state(const std::string& path, const AttentionState& state) {
  state.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor_record(out, state.w_a);
  write_tensor_record(out, state.query_proj);
  write_tensor_record(out, state.key_proj);
}

AttentionState load_attention_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  AttentionState st;
  st.w_a = read_tensor_record(in).to_matrix();
  st.query_proj = read_tensor_record(in).to_matrix();
  st.key_proj = read_tensor_record(in).to_matrix();
  st.validate();
  return st;
}

}  // namespace coopdet
