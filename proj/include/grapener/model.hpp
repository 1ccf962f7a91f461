#ifndef GRAPENER_MODEL_HPP
#define GRAPENER_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "grapener/eval.hpp"
#include "grapener/matrix.hpp"
#include "grapener/rng.hpp"
#include "grapener/spanconv.hpp"

namespace grapener {

// Token ids. [PAD] is reserved for format compatibility; instances are
// processed unpadded.
struct Vocab {
  static constexpr int kPad = 0, kUnk = 1, kCls = 2, kSep = 3;

  std::vector<std::string> id_to_token{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  std::unordered_map<std::string, int> token_to_id{
      {"[PAD]", 0}, {"[UNK]", 1}, {"[CLS]", 2}, {"[SEP]", 3}};

  static Vocab build(const std::vector<MrcInstance>& instances);
  int lookup(const std::string& token) const;
  size_t size() const { return id_to_token.size(); }
};

struct ModelConfig {
  size_t d_model = 64;
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t d_ff = 128;
  size_t max_seq_len = 512;
  double dropout = 0.1;
  double learning_rate = 3e-5;
  size_t batch_size = 1;
  size_t epochs = 40;
  // Initialization scales (echoed into checkpoints and manifests):
  // span heads draw uniform from [-head_init_range, head_init_range],
  // embeddings draw normal(0, embed_init_std), encoder linear maps draw
  // normal(0, 1/sqrt(fan_in)). Biases and layer-norm shifts start at
  // zero, layer-norm gains at one.
  double head_init_range = 0.02;
  double embed_init_std = 1.0;
  Vocab vocab;

  void validate() const;  // throws ConfigError
};

struct LayerParams {
  Matrix ln1_g, ln1_b;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_g, ln2_b;
  Matrix ff_w1, ff_b1, ff_w2, ff_b2;
};

// Dual pointer classifiers: start head, end head, and the 4->2 layer
// fusing the end features with the row-softmaxed start distribution.
struct SpanHeads {
  Matrix w_start, b_start;  // d x 2, 1 x 2
  Matrix w_end, b_end;      // d x 2, 1 x 2
  Matrix fuse, fuse_b;      // 4 x 2, 1 x 2
};

struct Parameters {
  Matrix tok_embed;  // vocab x d
  Matrix pos_embed;  // max_seq_len x d
  std::vector<LayerParams> layers;
  Matrix lnf_g, lnf_b;  // final layer norm
  SpanHeads heads;

  // Visits every tensor in a fixed order with a stable name.
  template <typename F>
  void for_each(F&& f) {
    f("tok_embed", tok_embed);
    f("pos_embed", pos_embed);
    for (size_t l = 0; l < layers.size(); ++l) {
      auto& L = layers[l];
      std::string p = "layer" + std::to_string(l) + ".";
      f(p + "ln1_g", L.ln1_g); f(p + "ln1_b", L.ln1_b);
      f(p + "wq", L.wq); f(p + "bq", L.bq);
      f(p + "wk", L.wk); f(p + "bk", L.bk);
      f(p + "wv", L.wv); f(p + "bv", L.bv);
      f(p + "wo", L.wo); f(p + "bo", L.bo);
      f(p + "ln2_g", L.ln2_g); f(p + "ln2_b", L.ln2_b);
      f(p + "ff_w1", L.ff_w1); f(p + "ff_b1", L.ff_b1);
      f(p + "ff_w2", L.ff_w2); f(p + "ff_b2", L.ff_b2);
    }
    f("lnf_g", lnf_g); f("lnf_b", lnf_b);
    f("heads.w_start", heads.w_start); f("heads.b_start", heads.b_start);
    f("heads.w_end", heads.w_end); f("heads.b_end", heads.b_end);
    f("heads.fuse", heads.fuse); f("heads.fuse_b", heads.fuse_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<Parameters*>(this)->for_each(
        [&](const std::string& n, Matrix& m) { f(n, const_cast<const Matrix&>(m)); });
  }

  Parameters like_zero() const;
  size_t parameter_count() const;
};

Parameters init_parameters(const ModelConfig& cfg, uint64_t seed);

struct Representations {
  Matrix h;  // n x d_model
};

// Deterministic evaluation-mode encoding (dropout off).
Representations encode(const MrcInstance& inst, const Parameters& params,
                       const ModelConfig& cfg);

// Row i = H_i . W_start + b_start.
Matrix start_logits(const Representations& h, const SpanHeads& heads);

// Row i = fuse . concat(H_i . W_end + b_end, rowsoftmax(start_logits)_i) + fuse_b.
Matrix end_logits(const Representations& h, const Matrix& p_start_logits,
                  const SpanHeads& heads);

// (L_start + L_end)/2, each the mean two-class cross-entropy over
// supervised positions: CONTEXT always, DEMO iff supervise_demo,
// CLS/SEP never. Throws on instances with no supervised position.
double loss_from_logits(const Matrix& p_start_logits, const Matrix& p_end_logits,
                        const MrcInstance& inst, bool supervise_demo);

struct LossGrad {
  double loss = 0.0;
  Parameters grads;
};

// Full forward + backward for one instance. Training mode applies
// dropout from `rng`; evaluation mode is deterministic.
LossGrad loss_and_gradients(const MrcInstance& inst, const Parameters& params,
                            const ModelConfig& cfg, bool supervise_demo,
                            bool training, Rng* rng);

struct EpochLog {
  size_t epoch = 0;
  double mean_loss = 0.0;
  double dev_p = 0.0, dev_r = 0.0, dev_f1 = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Parameters params;  // best dev-F1 snapshot (final params when no dev set)
  std::vector<EpochLog> log;
  size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
};

std::string train_log_to_jsonl(const std::vector<EpochLog>& log);

// Adam over shuffled instances, batch gradients averaged. Dev entity-F1
// is evaluated each epoch for snapshot selection. Deterministic in
// (instances, cfg, seed). Throws on non-finite loss.
TrainResult train_model(const std::vector<MrcInstance>& train_instances,
                        const std::vector<MrcInstance>& dev_instances,
                        const GoldSpans& dev_gold, const ModelConfig& cfg,
                        uint64_t seed, bool supervise_demo = true);

// Head-only training on externally produced representations, keyed by
// instance id. Serves encoders whose outputs were exported elsewhere.
TrainResult train_heads_on_representations(
    const std::map<std::string, Matrix>& reprs,
    const std::vector<MrcInstance>& train_instances,
    const std::vector<MrcInstance>& dev_instances, const GoldSpans& dev_gold,
    const ModelConfig& cfg, uint64_t seed, bool supervise_demo = true);

// Representation file: magic "MRCH", version u16, count u32, then per
// instance: id length u32 + UTF-8 id, n u32, d u32, n*d little-endian
// f32, row-major.
void export_representations(const std::string& path,
                            const std::vector<std::pair<std::string, Matrix>>& items);
std::map<std::string, Matrix> import_representations(const std::string& path);

// Shape-checks imported matrices against assembled instances.
void check_representations(const std::map<std::string, Matrix>& reprs,
                           const std::vector<MrcInstance>& instances);

// Versioned binary checkpoint with config echo and content hash.
void save_checkpoint(const std::string& path, const Parameters& params,
                     const ModelConfig& cfg);
std::pair<Parameters, ModelConfig> load_checkpoint(const std::string& path);

}  // namespace grapener

#endif
