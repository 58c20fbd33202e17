#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coopdet/tensor.hpp"

namespace coopdet {

// Compact descriptors exchanged during the handshake. The query is the small
// one the vehicle broadcasts; keys stay on the infrastructure side.
using QueryVector = std::vector<double>;
using KeyVector = std::vector<double>;

// Mean-pools each channel of the image and projects the pooled vector with
// `projection` (rows = descriptor size, cols = image channels).
QueryVector encode_query(const PseudoImage& image, const Matrix& projection);
KeyVector encode_key(const PseudoImage& image, const Matrix& projection);

// Cosine alignment between the projected query and a key:
//   t = (q^T W k) / (|q^T W| |k|).
// Result is in [-1, 1]. If either norm vanishes the score is 0 and
// *degenerate (when given) is set.
double matching_score(const QueryVector& query, const KeyVector& key,
                      const Matrix& w_a, bool* degenerate = nullptr);

// Gradient of matching_score with respect to w_a, same shape as w_a:
//   d t / d W = q outer (k / (|u||k|) - t u / |u|^2),  u = q^T W.
// Throws std::invalid_argument on degenerate norms.
Matrix score_gradient(const QueryVector& query, const KeyVector& key,
                      const Matrix& w_a);

// Raw scores plus their softmax weights for one handshake round.
struct ScoreSet {
  std::vector<double> raw;         // cosine scores, one per responder
  std::vector<double> normalized;  // softmax of raw, sums to 1
  std::vector<int> ids;            // responder ids, parallel to raw
};

// Softmax with max subtraction. `ids` defaults to 0..n-1 when empty.
ScoreSet normalize_scores(std::vector<double> raw, std::vector<int> ids = {});

// Argmax of the raw scores; ties break toward the lowest id.
int select_infrastructure(const ScoreSet& scores);

// Entrywise scaling of a feature map by the selected softmax weight.
PseudoImage refine_feature(const PseudoImage& image, double weight);

// Channel concatenation [local, refined] used at inference: 2C channels out.
PseudoImage fuse_inference(const PseudoImage& local, const PseudoImage& refined);

// Training-time fusion: [local, sum_i normalized_i * infra_i].
PseudoImage fuse_training(const PseudoImage& local,
                          const std::vector<PseudoImage>& infra,
                          const ScoreSet& scores);

// One labelled handshake: which responder the oracle says to pick.
struct AttentionSample {
  QueryVector query;
  std::vector<KeyVector> keys;
  int label = 0;  // index into keys
};

struct TrainResult {
  Matrix w;                  // trained w_a
  std::vector<double> loss;  // mean cross-entropy at the start of each epoch
};

// Full-batch gradient descent on the softmax cross-entropy surrogate over
// the matching scores. Degenerate (zero-norm) pairs score 0 and contribute
// no gradient.
TrainResult train_attention(const std::vector<AttentionSample>& dataset,
                            Matrix w0, double learning_rate, int epochs);

// Fraction of samples whose top raw score lands on the label.
double selection_accuracy(const std::vector<AttentionSample>& dataset,
                          const Matrix& w_a);

// Everything the matcher needs at run time. Serialized as three tensor
// records back to back: w_a, query projection, key projection.
struct AttentionState {
  Matrix w_a;         // m_mu x m_psi
  Matrix query_proj;  // m_mu x channels
  Matrix key_proj;    // m_psi x channels

  void validate() const;
};

AttentionState seeded_attention_state(int m_mu, int m_psi, int channels,
                                      uint64_t seed);
void save_attention_state(const std::string& path, const AttentionState& state);
AttentionState load_attention_state(const std::string& path);

}  // namespace coopdet
