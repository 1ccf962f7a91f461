#include "grapener/model.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <tuple>

#include "grapener/decode.hpp"
#include "grapener/error.hpp"
#include "grapener/hash.hpp"
#include "json.hpp"

namespace grapener {

namespace {

constexpr double kLnEps = 1e-5;

// tanh-form GELU; smooth everywhere, which keeps finite-difference
// gradient checks clean.
double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  double x2 = x * x;
  double u = c * (x + 0.044715 * x2 * x);
  double t = std::tanh(u);
  double du = c * (1.0 + 3.0 * 0.044715 * x2);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

struct LnCache {
  Matrix xhat;                    // normalized rows
  std::vector<double> inv_sigma;  // per row
};

Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, LnCache& cache) {
  Matrix out(x.rows, x.cols);
  cache.xhat = Matrix(x.rows, x.cols);
  cache.inv_sigma.assign(x.rows, 0.0);
  double inv_n = 1.0 / double(x.cols);
  for (size_t i = 0; i < x.rows; ++i) {
    double mu = 0.0;
    for (size_t j = 0; j < x.cols; ++j) mu += x(i, j);
    mu *= inv_n;
    double var = 0.0;
    for (size_t j = 0; j < x.cols; ++j) {
      double d = x(i, j) - mu;
      var += d * d;
    }
    var *= inv_n;
    double inv_sigma = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_sigma[i] = inv_sigma;
    for (size_t j = 0; j < x.cols; ++j) {
      double xh = (x(i, j) - mu) * inv_sigma;
      cache.xhat(i, j) = xh;
      out(i, j) = xh * g(0, j) + b(0, j);
    }
  }
  return out;
}

// Adds the input gradient to dx and the parameter gradients to dg/db.
void layer_norm_backward(const Matrix& dy, const LnCache& cache, const Matrix& g,
                         Matrix& dx, Matrix& dg, Matrix& db) {
  size_t n = cache.xhat.rows, d = cache.xhat.cols;
  double inv_d = 1.0 / double(d);
  for (size_t i = 0; i < n; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (size_t j = 0; j < d; ++j) {
      double dxh = dy(i, j) * g(0, j);
      m1 += dxh;
      m2 += dxh * cache.xhat(i, j);
    }
    m1 *= inv_d;
    m2 *= inv_d;
    for (size_t j = 0; j < d; ++j) {
      double dxh = dy(i, j) * g(0, j);
      dx(i, j) += cache.inv_sigma[i] * (dxh - m1 - cache.xhat(i, j) * m2);
      dg(0, j) += dy(i, j) * cache.xhat(i, j);
      db(0, j) += dy(i, j);
    }
  }
}

struct LayerCache {
  LnCache ln1;
  Matrix a;                  // ln1 output
  Matrix q, k, v;            // projected, heads packed along columns
  std::vector<Matrix> probs; // attention distributions per head
  Matrix ctx;                // attended values, heads re-packed
  Matrix drop1;              // inverted-dropout mask on the attention output
  Matrix x1;                 // residual stream after attention
  LnCache ln2;
  Matrix ln2_out;
  Matrix ff_pre;             // before GELU
  Matrix ff_act;             // after GELU
  Matrix drop2;              // mask on the feed-forward output
  Matrix x2;                 // residual stream after feed-forward
};

struct ForwardCache {
  std::vector<int> ids;
  Matrix x0;  // token + position embeddings
  std::vector<LayerCache> layers;
  LnCache lnf;
  Matrix h;
};

Matrix dropout_mask(size_t rows, size_t cols, double rate, bool training, Rng* rng) {
  Matrix m(rows, cols);
  if (!training || rate <= 0.0) {
    std::fill(m.a.begin(), m.a.end(), 1.0);
    return m;
  }
  double keep = 1.0 - rate;
  double scale = 1.0 / keep;
  for (double& v : m.a) v = (rng->uniform() < keep) ? scale : 0.0;
  return m;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  for (size_t i = 0; i < x.a.size(); ++i) x.a[i] *= mask.a[i];
}

std::vector<int> token_ids(const MrcInstance& inst, const Vocab& vocab) {
  std::vector<int> ids;
  ids.reserve(inst.tokens.size());
  for (const auto& t : inst.tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

void run_encoder(const MrcInstance& inst, const Parameters& p, const ModelConfig& cfg,
                 bool training, Rng* rng, ForwardCache& fc) {
  size_t n = inst.tokens.size();
  if (n == 0) throw Error("cannot encode empty instance " + inst.source_id);
  if (n > cfg.max_seq_len)
    throw Error("instance " + inst.source_id + " has length " + std::to_string(n) +
                " > max_seq_len " + std::to_string(cfg.max_seq_len));
  size_t d = cfg.d_model;
  size_t dh = d / cfg.n_heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));

  fc.ids = token_ids(inst, cfg.vocab);
  fc.x0 = Matrix(n, d);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j)
      fc.x0(i, j) = p.tok_embed(size_t(fc.ids[i]), j) + p.pos_embed(i, j);

  fc.layers.assign(cfg.n_layers, LayerCache{});
  const Matrix* x = &fc.x0;
  for (size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& lp = p.layers[l];
    LayerCache& lc = fc.layers[l];

    lc.a = layer_norm(*x, lp.ln1_g, lp.ln1_b, lc.ln1);
    lc.q = matmul(lc.a, lp.wq); add_row_bias(lc.q, lp.bq);
    lc.k = matmul(lc.a, lp.wk); add_row_bias(lc.k, lp.bk);
    lc.v = matmul(lc.a, lp.wv); add_row_bias(lc.v, lp.bv);

    lc.probs.assign(cfg.n_heads, Matrix());
    lc.ctx = Matrix(n, d);
    for (size_t h = 0; h < cfg.n_heads; ++h) {
      size_t off = h * dh;
      Matrix scores(n, n);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (size_t t = 0; t < dh; ++t) s += lc.q(i, off + t) * lc.k(j, off + t);
          scores(i, j) = s * inv_sqrt_dh;
        }
      lc.probs[h] = row_softmax(scores);
      const Matrix& pr = lc.probs[h];
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
          double w = pr(i, j);
          if (w == 0.0) continue;
          for (size_t t = 0; t < dh; ++t) lc.ctx(i, off + t) += w * lc.v(j, off + t);
        }
    }

    Matrix attn = matmul(lc.ctx, lp.wo);
    add_row_bias(attn, lp.bo);
    lc.drop1 = dropout_mask(n, d, cfg.dropout, training, rng);
    apply_mask(attn, lc.drop1);
    lc.x1 = *x;
    for (size_t i = 0; i < attn.a.size(); ++i) lc.x1.a[i] += attn.a[i];

    lc.ln2_out = layer_norm(lc.x1, lp.ln2_g, lp.ln2_b, lc.ln2);
    lc.ff_pre = matmul(lc.ln2_out, lp.ff_w1);
    add_row_bias(lc.ff_pre, lp.ff_b1);
    lc.ff_act = lc.ff_pre;
    for (double& v : lc.ff_act.a) v = gelu(v);
    Matrix ff = matmul(lc.ff_act, lp.ff_w2);
    add_row_bias(ff, lp.ff_b2);
    lc.drop2 = dropout_mask(n, d, cfg.dropout, training, rng);
    apply_mask(ff, lc.drop2);
    lc.x2 = lc.x1;
    for (size_t i = 0; i < ff.a.size(); ++i) lc.x2.a[i] += ff.a[i];

    x = &lc.x2;
  }

  fc.h = layer_norm(*x, p.lnf_g, p.lnf_b, fc.lnf);
}

// Backward through the encoder given dH; accumulates into g.
void encoder_backward(const Matrix& dh, const ForwardCache& fc, const Parameters& p,
                      const ModelConfig& cfg, Parameters& g) {
  size_t n = fc.h.rows, d = cfg.d_model;
  size_t dh_cols = d / cfg.n_heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(double(dh_cols));

  Matrix dx(n, d);
  layer_norm_backward(dh, fc.lnf, p.lnf_g, dx, g.lnf_g, g.lnf_b);

  for (size_t li = cfg.n_layers; li-- > 0;) {
    const LayerParams& lp = p.layers[li];
    LayerParams& gl = g.layers[li];
    const LayerCache& lc = fc.layers[li];

    // x2 = x1 + drop2 o ff_out
    Matrix d_ff = dx;
    apply_mask(d_ff, lc.drop2);
    Matrix d_act = matmul_bt(d_ff, lp.ff_w2);
    add_at_b(gl.ff_w2, lc.ff_act, d_ff);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) gl.ff_b2(0, j) += d_ff(i, j);
    Matrix d_pre = d_act;
    for (size_t i = 0; i < d_pre.a.size(); ++i) d_pre.a[i] *= gelu_grad(lc.ff_pre.a[i]);
    Matrix d_ln2 = matmul_bt(d_pre, lp.ff_w1);
    add_at_b(gl.ff_w1, lc.ln2_out, d_pre);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < cfg.d_ff; ++j) gl.ff_b1(0, j) += d_pre(i, j);
    // dx continues as d(x1): residual passes dx through, plus the LN path
    layer_norm_backward(d_ln2, lc.ln2, lp.ln2_g, dx, gl.ln2_g, gl.ln2_b);

    // x1 = x_in + drop1 o (ctx wo + bo)
    Matrix d_attn = dx;
    apply_mask(d_attn, lc.drop1);
    Matrix d_ctx = matmul_bt(d_attn, lp.wo);
    add_at_b(gl.wo, lc.ctx, d_attn);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) gl.bo(0, j) += d_attn(i, j);

    Matrix dq(n, d), dk(n, d), dv(n, d);
    for (size_t h = 0; h < cfg.n_heads; ++h) {
      size_t off = h * dh_cols;
      const Matrix& pr = lc.probs[h];
      Matrix dp(n, n);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (size_t t = 0; t < dh_cols; ++t) s += d_ctx(i, off + t) * lc.v(j, off + t);
          dp(i, j) = s;
          double w = pr(i, j);
          if (w != 0.0)
            for (size_t t = 0; t < dh_cols; ++t) dv(j, off + t) += w * d_ctx(i, off + t);
        }
      Matrix ds = row_softmax_backward(pr, dp);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
          double s = ds(i, j) * inv_sqrt_dh;
          if (s == 0.0) continue;
          for (size_t t = 0; t < dh_cols; ++t) {
            dq(i, off + t) += s * lc.k(j, off + t);
            dk(j, off + t) += s * lc.q(i, off + t);
          }
        }
    }

    Matrix da = matmul_bt(dq, lp.wq);
    {
      Matrix tmp = matmul_bt(dk, lp.wk);
      for (size_t i = 0; i < da.a.size(); ++i) da.a[i] += tmp.a[i];
      tmp = matmul_bt(dv, lp.wv);
      for (size_t i = 0; i < da.a.size(); ++i) da.a[i] += tmp.a[i];
    }
    add_at_b(gl.wq, lc.a, dq);
    add_at_b(gl.wk, lc.a, dk);
    add_at_b(gl.wv, lc.a, dv);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) {
        gl.bq(0, j) += dq(i, j);
        gl.bk(0, j) += dk(i, j);
        gl.bv(0, j) += dv(i, j);
      }
    layer_norm_backward(da, lc.ln1, lp.ln1_g, dx, gl.ln1_g, gl.ln1_b);
  }

  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) {
      g.tok_embed(size_t(fc.ids[i]), j) += dx(i, j);
      g.pos_embed(i, j) += dx(i, j);
    }
}

std::vector<size_t> supervised_positions(const MrcInstance& inst, bool supervise_demo) {
  std::vector<size_t> s;
  for (size_t i = 0; i < inst.roles.size(); ++i) {
    PositionRole r = inst.roles[i];
    if (r == PositionRole::CONTEXT || (supervise_demo && r == PositionRole::DEMO))
      s.push_back(i);
  }
  return s;
}

// Cross-entropy of a two-logit row against label y, stabilized.
double row_ce(const Matrix& logits, size_t i, int y) {
  double l0 = logits(i, 0), l1 = logits(i, 1);
  double m = std::max(l0, l1);
  double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
  return lse - (y == 1 ? l1 : l0);
}

struct HeadCache {
  Matrix ls;  // start logits
  Matrix ps;  // row softmax of ls
  Matrix e;   // end features H we + be
  Matrix cat; // e ++ ps
  Matrix le;  // end logits
};

void run_heads(const Matrix& h, const SpanHeads& heads, HeadCache& hc) {
  hc.ls = matmul(h, heads.w_start);
  add_row_bias(hc.ls, heads.b_start);
  hc.ps = row_softmax(hc.ls);
  hc.e = matmul(h, heads.w_end);
  add_row_bias(hc.e, heads.b_end);
  hc.cat = Matrix(h.rows, 4);
  for (size_t i = 0; i < h.rows; ++i) {
    hc.cat(i, 0) = hc.e(i, 0);
    hc.cat(i, 1) = hc.e(i, 1);
    hc.cat(i, 2) = hc.ps(i, 0);
    hc.cat(i, 3) = hc.ps(i, 1);
  }
  hc.le = matmul(hc.cat, heads.fuse);
  add_row_bias(hc.le, heads.fuse_b);
}

// Loss plus gradient w.r.t. H and the head tensors. dh may be null when
// only head gradients are wanted (frozen representations).
double heads_loss_backward(const Matrix& h, const SpanHeads& heads,
                           const MrcInstance& inst, bool supervise_demo,
                           Matrix* dh, SpanHeads& ghead) {
  HeadCache hc;
  run_heads(h, heads, hc);
  std::vector<size_t> sup = supervised_positions(inst, supervise_demo);
  if (sup.empty())
    throw Error("instance " + inst.source_id + " has no supervised positions");

  size_t n = h.rows;
  double inv_m = 1.0 / double(sup.size());
  double l_start = 0.0, l_end = 0.0;
  Matrix dls(n, 2), dle(n, 2);
  Matrix pe = row_softmax(hc.le);
  for (size_t i : sup) {
    int ys = inst.y_start[i] ? 1 : 0;
    int ye = inst.y_end[i] ? 1 : 0;
    l_start += row_ce(hc.ls, i, ys);
    l_end += row_ce(hc.le, i, ye);
    // d(total)/d(logit) = (softmax - onehot) / (2 M): each term carries
    // weight 1/2 and is averaged over the M supervised positions.
    double w = 0.5 * inv_m;
    dls(i, 0) += (hc.ps(i, 0) - (ys == 0 ? 1.0 : 0.0)) * w;
    dls(i, 1) += (hc.ps(i, 1) - (ys == 1 ? 1.0 : 0.0)) * w;
    dle(i, 0) += (pe(i, 0) - (ye == 0 ? 1.0 : 0.0)) * w;
    dle(i, 1) += (pe(i, 1) - (ye == 1 ? 1.0 : 0.0)) * w;
  }
  double loss = 0.5 * (l_start + l_end) * inv_m;

  // End path: le = cat fuse + fuse_b, cat = [e | ps].
  Matrix dcat = matmul_bt(dle, heads.fuse);
  add_at_b(ghead.fuse, hc.cat, dle);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < 2; ++j) ghead.fuse_b(0, j) += dle(i, j);
  Matrix de(n, 2), dps(n, 2);
  for (size_t i = 0; i < n; ++i) {
    de(i, 0) = dcat(i, 0);
    de(i, 1) = dcat(i, 1);
    dps(i, 0) = dcat(i, 2);
    dps(i, 1) = dcat(i, 3);
  }
  add_at_b(ghead.w_end, h, de);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < 2; ++j) ghead.b_end(0, j) += de(i, j);

  // Start logits receive the direct loss term and the softmax path into
  // the end classifier.
  Matrix dls_soft = row_softmax_backward(hc.ps, dps);
  for (size_t i = 0; i < dls.a.size(); ++i) dls.a[i] += dls_soft.a[i];
  add_at_b(ghead.w_start, h, dls);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < 2; ++j) ghead.b_start(0, j) += dls(i, j);

  if (dh) {
    Matrix t1 = matmul_bt(de, heads.w_end);
    Matrix t2 = matmul_bt(dls, heads.w_start);
    for (size_t i = 0; i < dh->a.size(); ++i) dh->a[i] += t1.a[i] + t2.a[i];
  }
  return loss;
}

// Little-endian primitive I/O for the binary formats.
void put_bytes(std::string& buf, const void* p, size_t n) {
  buf.append(static_cast<const char*>(p), n);
}
void put_u16(std::string& buf, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(buf, b, 2);
}
void put_u32(std::string& buf, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(buf, b, 4);
}
void put_u64(std::string& buf, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(buf, b, 8);
}
void put_f32(std::string& buf, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(buf, u);
}
void put_f64(std::string& buf, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(buf, u);
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;
  const std::string what;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw Error("truncated " + what);
  }
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 1; i >= 0; --i) v = uint16_t((v << 8) | uint8_t(buf[pos + size_t(i)]));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | uint8_t(buf[pos + size_t(i)]);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | uint8_t(buf[pos + size_t(i)]);
    pos += 8;
    return v;
  }
  float f32() {
    uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double f64() {
    uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file_bytes(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + what + ": " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes,
                      const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + what + ": " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error("short write for " + what + ": " + path);
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"d_model", cfg.d_model},
                        {"n_layers", cfg.n_layers},
                        {"n_heads", cfg.n_heads},
                        {"d_ff", cfg.d_ff},
                        {"max_seq_len", cfg.max_seq_len},
                        {"dropout", cfg.dropout},
                        {"learning_rate", cfg.learning_rate},
                        {"batch_size", cfg.batch_size},
                        {"epochs", cfg.epochs},
                        {"head_init_range", cfg.head_init_range},
                        {"embed_init_std", cfg.embed_init_std},
                        {"vocab", cfg.vocab.id_to_token}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<size_t>();
  cfg.n_layers = j.at("n_layers").get<size_t>();
  cfg.n_heads = j.at("n_heads").get<size_t>();
  cfg.d_ff = j.at("d_ff").get<size_t>();
  cfg.max_seq_len = j.at("max_seq_len").get<size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<size_t>();
  cfg.epochs = j.at("epochs").get<size_t>();
  cfg.head_init_range = j.at("head_init_range").get<double>();
  cfg.embed_init_std = j.at("embed_init_std").get<double>();
  auto toks = j.at("vocab").get<std::vector<std::string>>();
  cfg.vocab = Vocab{};
  cfg.vocab.id_to_token.clear();
  cfg.vocab.token_to_id.clear();
  for (size_t i = 0; i < toks.size(); ++i) {
    cfg.vocab.id_to_token.push_back(toks[i]);
    cfg.vocab.token_to_id.emplace(toks[i], int(i));
  }
  return cfg;
}

Parameters allocate_parameters(const ModelConfig& cfg) {
  Parameters p;
  size_t d = cfg.d_model;
  p.tok_embed = Matrix(cfg.vocab.size(), d);
  p.pos_embed = Matrix(cfg.max_seq_len, d);
  p.layers.resize(cfg.n_layers);
  for (auto& L : p.layers) {
    L.ln1_g = Matrix(1, d);
    L.ln1_b = Matrix(1, d);
    L.wq = Matrix(d, d);
    L.bq = Matrix(1, d);
    L.wk = Matrix(d, d);
    L.bk = Matrix(1, d);
    L.wv = Matrix(d, d);
    L.bv = Matrix(1, d);
    L.wo = Matrix(d, d);
    L.bo = Matrix(1, d);
    L.ln2_g = Matrix(1, d);
    L.ln2_b = Matrix(1, d);
    L.ff_w1 = Matrix(d, cfg.d_ff);
    L.ff_b1 = Matrix(1, cfg.d_ff);
    L.ff_w2 = Matrix(cfg.d_ff, d);
    L.ff_b2 = Matrix(1, d);
  }
  p.lnf_g = Matrix(1, d);
  p.lnf_b = Matrix(1, d);
  p.heads.w_start = Matrix(d, 2);
  p.heads.b_start = Matrix(1, 2);
  p.heads.w_end = Matrix(d, 2);
  p.heads.b_end = Matrix(1, 2);
  p.heads.fuse = Matrix(4, 2);
  p.heads.fuse_b = Matrix(1, 2);
  return p;
}

void fill_normal(Matrix& m, Rng& rng, double std) {
  for (double& v : m.a) v = rng.normal(0.0, std);
}

void fill_uniform(Matrix& m, Rng& rng, double range) {
  for (double& v : m.a) v = rng.uniform(-range, range);
}

void fill_ones(Matrix& m) { std::fill(m.a.begin(), m.a.end(), 1.0); }

// Adam moment state shadows the parameter shapes.
struct AdamState {
  Parameters m, v;
  size_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

std::vector<Matrix*> tensor_list(Parameters& p) {
  std::vector<Matrix*> out;
  p.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

void adam_step(Parameters& params, const Parameters& grads, AdamState& st, double lr) {
  st.t += 1;
  double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
  double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
  auto pt = tensor_list(params);
  auto gt = tensor_list(const_cast<Parameters&>(grads));
  auto mt = tensor_list(st.m);
  auto vt = tensor_list(st.v);
  for (size_t k = 0; k < pt.size(); ++k) {
    Matrix& p = *pt[k];
    const Matrix& g = *gt[k];
    Matrix& m = *mt[k];
    Matrix& v = *vt[k];
    for (size_t i = 0; i < p.a.size(); ++i) {
      m.a[i] = st.beta1 * m.a[i] + (1.0 - st.beta1) * g.a[i];
      v.a[i] = st.beta2 * v.a[i] + (1.0 - st.beta2) * g.a[i] * g.a[i];
      double mhat = m.a[i] / bc1;
      double vhat = v.a[i] / bc2;
      p.a[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

double now_ms() {
  using namespace std::chrono;
  return double(duration_cast<microseconds>(steady_clock::now().time_since_epoch()).count()) /
         1000.0;
}

}  // namespace

Vocab Vocab::build(const std::vector<MrcInstance>& instances) {
  Vocab v;
  for (const auto& inst : instances)
    for (const auto& tok : inst.tokens)
      if (!v.token_to_id.count(tok)) {
        v.token_to_id.emplace(tok, int(v.id_to_token.size()));
        v.id_to_token.push_back(tok);
      }
  return v;
}

int Vocab::lookup(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0)
    throw ConfigError("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (vocab.size() < 4) throw ConfigError("vocab lacks the special tokens");
}

Parameters Parameters::like_zero() const {
  Parameters g = *this;
  g.for_each([](const std::string&, Matrix& m) { m.zero(); });
  return g;
}

size_t Parameters::parameter_count() const {
  size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

Parameters init_parameters(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Parameters p = allocate_parameters(cfg);
  Rng rng(seed);
  fill_normal(p.tok_embed, rng, cfg.embed_init_std);
  fill_normal(p.pos_embed, rng, cfg.embed_init_std);
  double d = double(cfg.d_model);
  for (auto& L : p.layers) {
    fill_ones(L.ln1_g);
    fill_normal(L.wq, rng, 1.0 / std::sqrt(d));
    fill_normal(L.wk, rng, 1.0 / std::sqrt(d));
    fill_normal(L.wv, rng, 1.0 / std::sqrt(d));
    fill_normal(L.wo, rng, 1.0 / std::sqrt(d));
    fill_ones(L.ln2_g);
    fill_normal(L.ff_w1, rng, 1.0 / std::sqrt(d));
    fill_normal(L.ff_w2, rng, 1.0 / std::sqrt(double(cfg.d_ff)));
  }
  fill_ones(p.lnf_g);
  fill_uniform(p.heads.w_start, rng, cfg.head_init_range);
  fill_uniform(p.heads.w_end, rng, cfg.head_init_range);
  fill_uniform(p.heads.fuse, rng, cfg.head_init_range);
  return p;
}

Representations encode(const MrcInstance& inst, const Parameters& params,
                       const ModelConfig& cfg) {
  ForwardCache fc;
  run_encoder(inst, params, cfg, /*training=*/false, nullptr, fc);
  return Representations{std::move(fc.h)};
}

Matrix start_logits(const Representations& h, const SpanHeads& heads) {
  Matrix out = matmul(h.h, heads.w_start);
  add_row_bias(out, heads.b_start);
  return out;
}

Matrix end_logits(const Representations& h, const Matrix& p_start_logits,
                  const SpanHeads& heads) {
  Matrix e = matmul(h.h, heads.w_end);
  add_row_bias(e, heads.b_end);
  Matrix ps = row_softmax(p_start_logits);
  Matrix cat(h.h.rows, 4);
  for (size_t i = 0; i < cat.rows; ++i) {
    cat(i, 0) = e(i, 0);
    cat(i, 1) = e(i, 1);
    cat(i, 2) = ps(i, 0);
    cat(i, 3) = ps(i, 1);
  }
  Matrix out = matmul(cat, heads.fuse);
  add_row_bias(out, heads.fuse_b);
  return out;
}

double loss_from_logits(const Matrix& p_start_logits, const Matrix& p_end_logits,
                        const MrcInstance& inst, bool supervise_demo) {
  std::vector<size_t> sup = supervised_positions(inst, supervise_demo);
  if (sup.empty())
    throw Error("instance " + inst.source_id + " has no supervised positions");
  double l_start = 0.0, l_end = 0.0;
  for (size_t i : sup) {
    l_start += row_ce(p_start_logits, i, inst.y_start[i] ? 1 : 0);
    l_end += row_ce(p_end_logits, i, inst.y_end[i] ? 1 : 0);
  }
  return 0.5 * (l_start + l_end) / double(sup.size());
}

LossGrad loss_and_gradients(const MrcInstance& inst, const Parameters& params,
                            const ModelConfig& cfg, bool supervise_demo,
                            bool training, Rng* rng) {
  LossGrad out;
  out.grads = params.like_zero();
  ForwardCache fc;
  run_encoder(inst, params, cfg, training, rng, fc);
  Matrix dh(fc.h.rows, fc.h.cols);
  out.loss = heads_loss_backward(fc.h, params.heads, inst, supervise_demo, &dh,
                                 out.grads.heads);
  encoder_backward(dh, fc, params, cfg, out.grads);
  return out;
}

std::string train_log_to_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::json j{{"epoch", e.epoch},        {"mean_loss", e.mean_loss},
                     {"dev_precision", e.dev_p}, {"dev_recall", e.dev_r},
                     {"dev_f1", e.dev_f1},       {"wall_ms", e.wall_ms}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

// Shared epoch loop. step(chunk) accumulates gradients for the chunk and
// returns its summed loss; eval() returns (P, R, F1) on dev.
template <typename StepFn, typename EvalFn>
TrainResult train_loop(Parameters params, size_t n_train, const ModelConfig& cfg,
                       uint64_t seed, bool have_dev, StepFn&& step, EvalFn&& eval) {
  TrainResult res;
  AdamState adam;
  adam.m = params.like_zero();
  adam.v = params.like_zero();
  Rng order_rng(seed ^ 0x9e3779b97f4a7c15ull);

  res.params = params;
  res.best_dev_f1 = -1.0;
  std::vector<size_t> order(n_train);
  for (size_t i = 0; i < n_train; ++i) order[i] = i;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double t0 = now_ms();
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t at = 0; at < n_train; at += cfg.batch_size) {
      size_t stop = std::min(at + cfg.batch_size, n_train);
      std::vector<size_t> chunk(order.begin() + long(at), order.begin() + long(stop));
      Parameters grads = params.like_zero();
      double chunk_loss = step(params, chunk, grads);
      if (!std::isfinite(chunk_loss))
        throw Error("training diverged (non-finite loss) at epoch " +
                    std::to_string(epoch));
      double inv = 1.0 / double(chunk.size());
      grads.for_each([&](const std::string&, Matrix& m) {
        for (double& v : m.a) v *= inv;
      });
      adam_step(params, grads, adam, cfg.learning_rate);
      loss_sum += chunk_loss;
    }

    EpochLog el;
    el.epoch = epoch;
    el.mean_loss = loss_sum / double(n_train);
    if (have_dev) {
      auto [p, r, f1] = eval(params);
      el.dev_p = p;
      el.dev_r = r;
      el.dev_f1 = f1;
      if (f1 > res.best_dev_f1) {
        res.best_dev_f1 = f1;
        res.params = params;
        res.best_epoch = epoch;
      }
    } else {
      res.params = params;
      res.best_epoch = epoch;
    }
    el.wall_ms = now_ms() - t0;
    res.log.push_back(el);
  }
  if (!have_dev || res.best_dev_f1 < 0.0) res.best_dev_f1 = 0.0;
  if (cfg.epochs == 0) res.params = std::move(params);
  return res;
}

std::tuple<double, double, double> dev_metrics(const EvalReport& rep) {
  return {rep.micro.precision(), rep.micro.recall(), rep.micro.f1()};
}

}  // namespace

TrainResult train_model(const std::vector<MrcInstance>& train_instances,
                        const std::vector<MrcInstance>& dev_instances,
                        const GoldSpans& dev_gold, const ModelConfig& cfg,
                        uint64_t seed, bool supervise_demo) {
  cfg.validate();
  if (train_instances.empty()) throw Error("no training instances");
  for (const auto& inst : train_instances)
    if (inst.tokens.size() > cfg.max_seq_len)
      throw Error("instance " + inst.source_id + " exceeds max_seq_len");

  Parameters params = init_parameters(cfg, seed);
  Rng drop_rng(seed ^ 0x6a09e667f3bcc909ull);

  auto step = [&](const Parameters& p, const std::vector<size_t>& chunk,
                  Parameters& grads) {
    double loss = 0.0;
    for (size_t idx : chunk) {
      const MrcInstance& inst = train_instances[idx];
      ForwardCache fc;
      run_encoder(inst, p, cfg, /*training=*/true, &drop_rng, fc);
      Matrix dh(fc.h.rows, fc.h.cols);
      loss += heads_loss_backward(fc.h, p.heads, inst, supervise_demo, &dh, grads.heads);
      encoder_backward(dh, fc, p, cfg, grads);
    }
    return loss;
  };
  auto eval = [&](const Parameters& p) {
    std::vector<Prediction> preds;
    preds.reserve(dev_instances.size());
    for (const auto& inst : dev_instances) preds.push_back(predict(inst, p, cfg));
    return dev_metrics(score(dev_gold, preds));
  };
  return train_loop(std::move(params), train_instances.size(), cfg, seed,
                    !dev_instances.empty(), step, eval);
}

TrainResult train_heads_on_representations(
    const std::map<std::string, Matrix>& reprs,
    const std::vector<MrcInstance>& train_instances,
    const std::vector<MrcInstance>& dev_instances, const GoldSpans& dev_gold,
    const ModelConfig& cfg, uint64_t seed, bool supervise_demo) {
  cfg.validate();
  if (train_instances.empty()) throw Error("no training instances");
  auto lookup = [&](const MrcInstance& inst) -> const Matrix& {
    auto it = reprs.find(inst.key());
    if (it == reprs.end())
      throw Error("no representation for instance " + inst.key());
    return it->second;
  };
  for (const auto& inst : train_instances) lookup(inst);
  for (const auto& inst : dev_instances) lookup(inst);

  Parameters params = init_parameters(cfg, seed);

  auto step = [&](const Parameters& p, const std::vector<size_t>& chunk,
                  Parameters& grads) {
    double loss = 0.0;
    for (size_t idx : chunk) {
      const MrcInstance& inst = train_instances[idx];
      loss += heads_loss_backward(lookup(inst), p.heads, inst, supervise_demo, nullptr,
                                  grads.heads);
    }
    return loss;
  };
  auto eval = [&](const Parameters& p) {
    std::vector<Prediction> preds;
    preds.reserve(dev_instances.size());
    for (const auto& inst : dev_instances)
      preds.push_back(predict_from_representations(inst, lookup(inst), p.heads));
    return dev_metrics(score(dev_gold, preds));
  };
  return train_loop(std::move(params), train_instances.size(), cfg, seed,
                    !dev_instances.empty(), step, eval);
}

void export_representations(const std::string& path,
                            const std::vector<std::pair<std::string, Matrix>>& items) {
  std::string buf;
  buf.append("MRCH");
  put_u16(buf, 1);
  put_u32(buf, uint32_t(items.size()));
  for (const auto& [id, m] : items) {
    put_u32(buf, uint32_t(id.size()));
    put_bytes(buf, id.data(), id.size());
    put_u32(buf, uint32_t(m.rows));
    put_u32(buf, uint32_t(m.cols));
    for (double v : m.a) put_f32(buf, float(v));
  }
  write_file_bytes(path, buf, "representation file");
}

std::map<std::string, Matrix> import_representations(const std::string& path) {
  std::string bytes = read_file_bytes(path, "representation file");
  ByteReader r{bytes, 0, "representation file"};
  if (r.str(4) != "MRCH") throw Error("bad magic in representation file " + path);
  uint16_t version = r.u16();
  if (version != 1)
    throw Error("unsupported representation file version " + std::to_string(version));
  uint32_t count = r.u32();
  std::map<std::string, Matrix> out;
  for (uint32_t i = 0; i < count; ++i) {
    std::string id = r.str(r.u32());
    uint32_t rows = r.u32();
    uint32_t cols = r.u32();
    Matrix m(rows, cols);
    for (double& v : m.a) v = double(r.f32());
    if (!m.finite())
      throw Error("non-finite values in representation for instance " + id);
    if (!out.emplace(std::move(id), std::move(m)).second)
      throw Error("duplicate instance id in representation file " + path);
  }
  return out;
}

void check_representations(const std::map<std::string, Matrix>& reprs,
                           const std::vector<MrcInstance>& instances) {
  for (const auto& inst : instances) {
    auto it = reprs.find(inst.key());
    if (it == reprs.end())
      throw Error("no representation for instance " + inst.key());
    if (it->second.rows != inst.tokens.size())
      throw Error("representation for " + inst.key() + " has " +
                  std::to_string(it->second.rows) + " rows, instance has " +
                  std::to_string(inst.tokens.size()) + " positions");
  }
}

void save_checkpoint(const std::string& path, const Parameters& params,
                     const ModelConfig& cfg) {
  std::string buf;
  buf.append("GPCK");
  put_u16(buf, 1);
  std::string cfg_json = config_to_json(cfg).dump();
  put_u32(buf, uint32_t(cfg_json.size()));
  put_bytes(buf, cfg_json.data(), cfg_json.size());
  size_t n_tensors = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++n_tensors; });
  put_u32(buf, uint32_t(n_tensors));
  params.for_each([&](const std::string& name, const Matrix& m) {
    put_u32(buf, uint32_t(name.size()));
    put_bytes(buf, name.data(), name.size());
    put_u32(buf, uint32_t(m.rows));
    put_u32(buf, uint32_t(m.cols));
    for (double v : m.a) put_f64(buf, v);
  });
  put_u64(buf, fnv1a64(buf));
  write_file_bytes(path, buf, "checkpoint");
}

std::pair<Parameters, ModelConfig> load_checkpoint(const std::string& path) {
  std::string bytes = read_file_bytes(path, "checkpoint");
  if (bytes.size() < 8) throw Error("truncated checkpoint");
  std::string body = bytes.substr(0, bytes.size() - 8);
  ByteReader tail{bytes, bytes.size() - 8, "checkpoint"};
  if (tail.u64() != fnv1a64(body))
    throw Error("checkpoint content hash mismatch: " + path);

  ByteReader r{body, 0, "checkpoint"};
  if (r.str(4) != "GPCK") throw Error("bad magic in checkpoint " + path);
  uint16_t version = r.u16();
  if (version != 1)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(r.str(r.u32())));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad checkpoint config: ") + e.what());
  }
  Parameters params = allocate_parameters(cfg);
  uint32_t n_tensors = r.u32();
  size_t expected = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++expected; });
  if (n_tensors != expected)
    throw Error("checkpoint tensor count mismatch: " + std::to_string(n_tensors));
  params.for_each([&](const std::string& name, Matrix& m) {
    std::string got = r.str(r.u32());
    if (got != name)
      throw Error("checkpoint tensor order mismatch: expected " + name + ", got " + got);
    uint32_t rows = r.u32(), cols = r.u32();
    if (rows != m.rows || cols != m.cols)
      throw Error("checkpoint tensor " + name + " has unexpected shape");
    for (double& v : m.a) v = r.f64();
  });
  return {std::move(params), std::move(cfg)};
}

}  // namespace grapener
