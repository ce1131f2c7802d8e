#include "thermograph/gnn.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "thermograph/error.hpp"
#include "thermograph/io.hpp"

namespace thermograph {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "thermograph-gat";

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0); }

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
}

double leaky(double s) { return s > 0.0 ? s : kLeakySlope * s; }
double leaky_grad(double s) { return s > 0.0 ? 1.0 : kLeakySlope; }

// Attention sets flattened: neighbours of u are nbr[off[u] .. off[u + 1]).
struct Csr {
  std::vector<int> off, nbr;

  void build(const AttentionSets& attend) {
    off.assign(1, 0);
    nbr.clear();
    for (const auto& row : attend) {
      nbr.insert(nbr.end(), row.begin(), row.end());
      off.push_back(static_cast<int>(nbr.size()));
    }
  }
  int nodes() const { return static_cast<int>(off.size()) - 1; }
  int entries() const { return static_cast<int>(nbr.size()); }
};

constexpr int kD = kGatHidden;

// Everything one layer needs for its backward pass. Row-major buffers.
struct LayerTape {
  int n = 0, in = 0, heads = 0;
  std::vector<double> input;         // n x in
  std::vector<double> Z;             // heads x n x kD
  std::vector<double> score, alpha;  // heads x entries
  std::vector<double> out;           // heads x n x kD, after tanh
};

struct Tape {
  Csr csr;
  std::vector<LayerTape> layers;
  std::vector<double> last;  // n x kD
  Eigen::VectorXd pooled;
  std::vector<double> buf_a, buf_b;
};

void forward_layer(const double* H, int in, const Csr& csr, const GatLayerParams& p, LayerTape& t,
                   std::vector<double>& result) {
  const int n = csr.nodes();
  const int E = csr.entries();
  const int heads = static_cast<int>(p.W.size());
  t.n = n;
  t.in = in;
  t.heads = heads;
  t.input.assign(H, H + static_cast<std::ptrdiff_t>(n) * in);
  t.Z.resize(static_cast<std::size_t>(heads * n * kD));
  t.score.resize(static_cast<std::size_t>(heads * E));
  t.alpha.resize(static_cast<std::size_t>(heads * E));
  t.out.resize(static_cast<std::size_t>(heads * n * kD));
  result.assign(static_cast<std::size_t>(n * kD), 0.0);
  const double inv_heads = 1.0 / heads;
  std::vector<double> src(static_cast<std::size_t>(n)), dst(static_cast<std::size_t>(n));
  std::vector<double> Wt(static_cast<std::size_t>(in * kD));
  for (int k = 0; k < heads; ++k) {
    const double* W = p.W[static_cast<std::size_t>(k)].data();  // column-major in x kD
    const double* a = p.a[static_cast<std::size_t>(k)].data();
    double* Z = t.Z.data() + static_cast<std::ptrdiff_t>(k) * n * kD;
    for (int i = 0; i < in; ++i) {
      for (int j = 0; j < kD; ++j) Wt[static_cast<std::size_t>(i * kD + j)] = W[i + j * in];
    }
    for (int u = 0; u < n; ++u) {
      double* z = Z + u * kD;
      const double* h = H + u * in;
      std::fill(z, z + kD, 0.0);
      for (int i = 0; i < in; ++i) {
        const double hi = h[i];
        const double* w = Wt.data() + i * kD;
        for (int j = 0; j < kD; ++j) z[j] += hi * w[j];
      }
      double s0 = 0.0, s1 = 0.0;
      for (int j = 0; j < kD; ++j) {
        s0 += z[j] * a[j];
        s1 += z[j] * a[kD + j];
      }
      src[u] = s0;
      dst[u] = s1;
    }
    double* score = t.score.data() + static_cast<std::ptrdiff_t>(k) * E;
    double* alpha = t.alpha.data() + static_cast<std::ptrdiff_t>(k) * E;
    double* out = t.out.data() + static_cast<std::ptrdiff_t>(k) * n * kD;
    for (int u = 0; u < n; ++u) {
      const int b = csr.off[static_cast<std::size_t>(u)], e = csr.off[static_cast<std::size_t>(u) + 1];
      double emax = -std::numeric_limits<double>::infinity();
      for (int x = b; x < e; ++x) {
        score[x] = src[u] + dst[csr.nbr[static_cast<std::size_t>(x)]];
        emax = std::max(emax, leaky(score[x]));
      }
      double sum = 0.0;
      for (int x = b; x < e; ++x) sum += (alpha[x] = std::exp(leaky(score[x]) - emax));
      const double inv = 1.0 / sum;
      double agg[kD] = {};
      for (int x = b; x < e; ++x) {
        alpha[x] *= inv;
        const double* z = Z + csr.nbr[static_cast<std::size_t>(x)] * kD;
        for (int j = 0; j < kD; ++j) agg[j] += alpha[x] * z[j];
      }
      double* o = out + u * kD;
      double* r = result.data() + u * kD;
      for (int j = 0; j < kD; ++j) {
        o[j] = std::tanh(agg[j]);
        r[j] += o[j] * inv_heads;
      }
    }
  }
}

// Accumulates parameter gradients into `g`; writes dL/dH into `dH` (n x in).
void backward_layer(const LayerTape& t, const Csr& csr, const GatLayerParams& p, const std::vector<double>& d_out,
                    GatLayerParams& g, std::vector<double>& dH) {
  const int n = t.n, in = t.in, E = csr.entries();
  dH.assign(static_cast<std::size_t>(n * in), 0.0);
  std::vector<double> d_agg(static_cast<std::size_t>(n * kD)), dZ(static_cast<std::size_t>(n * kD));
  std::vector<double> d_alpha(static_cast<std::size_t>(E));
  std::vector<double> d_src(static_cast<std::size_t>(n)), d_dst(static_cast<std::size_t>(n));
  const double inv_heads = 1.0 / t.heads;
  for (int k = 0; k < t.heads; ++k) {
    const double* W = p.W[static_cast<std::size_t>(k)].data();
    const double* a = p.a[static_cast<std::size_t>(k)].data();
    double* gW = g.W[static_cast<std::size_t>(k)].data();
    double* ga = g.a[static_cast<std::size_t>(k)].data();
    const double* Z = t.Z.data() + static_cast<std::ptrdiff_t>(k) * n * kD;
    const double* out = t.out.data() + static_cast<std::ptrdiff_t>(k) * n * kD;
    const double* score = t.score.data() + static_cast<std::ptrdiff_t>(k) * E;
    const double* alpha = t.alpha.data() + static_cast<std::ptrdiff_t>(k) * E;
    for (int i = 0; i < n * kD; ++i) d_agg[static_cast<std::size_t>(i)] = d_out[static_cast<std::size_t>(i)] * inv_heads * (1.0 - out[i] * out[i]);
    std::fill(dZ.begin(), dZ.end(), 0.0);
    std::fill(d_src.begin(), d_src.end(), 0.0);
    std::fill(d_dst.begin(), d_dst.end(), 0.0);
    for (int u = 0; u < n; ++u) {
      const int b = csr.off[static_cast<std::size_t>(u)], e = csr.off[static_cast<std::size_t>(u) + 1];
      const double* da = d_agg.data() + u * kD;
      double weighted = 0.0;
      for (int x = b; x < e; ++x) {
        const int v = csr.nbr[static_cast<std::size_t>(x)];
        double* dz = dZ.data() + v * kD;
        const double* z = Z + v * kD;
        double dot = 0.0;
        for (int j = 0; j < kD; ++j) {
          dz[j] += alpha[x] * da[j];
          dot += da[j] * z[j];
        }
        d_alpha[static_cast<std::size_t>(x)] = dot;
        weighted += alpha[x] * dot;
      }
      for (int x = b; x < e; ++x) {
        const double ds = alpha[x] * (d_alpha[static_cast<std::size_t>(x)] - weighted) * leaky_grad(score[x]);
        d_src[u] += ds;
        d_dst[csr.nbr[static_cast<std::size_t>(x)]] += ds;
      }
    }
    for (int u = 0; u < n; ++u) {
      const double* z = Z + u * kD;
      double* dz = dZ.data() + u * kD;
      for (int j = 0; j < kD; ++j) {
        ga[j] += z[j] * d_src[u];
        ga[kD + j] += z[j] * d_dst[u];
        dz[j] += d_src[u] * a[j] + d_dst[u] * a[kD + j];
      }
    }
    for (int u = 0; u < n; ++u) {
      const double* h = t.input.data() + u * in;
      const double* dz = dZ.data() + u * kD;
      double* dh = dH.data() + u * in;
      for (int j = 0; j < kD; ++j) {
        const double dzj = dz[j];
        for (int i = 0; i < in; ++i) {
          gW[i + j * in] += h[i] * dzj;
          dh[i] += dzj * W[i + j * in];
        }
      }
    }
  }
}

void forward_all(const GatModel& m, const GraphTensor& g, Tape& tape) {
  tape.csr.build(g.attend);
  const int n = tape.csr.nodes();
  tape.layers.resize(m.layers.size());
  auto& h = tape.buf_a;
  h.resize(static_cast<std::size_t>(n * g.features.cols()));
  for (int u = 0; u < n; ++u) {
    for (Eigen::Index c = 0; c < g.features.cols(); ++c) h[static_cast<std::size_t>(u * g.features.cols() + c)] = g.features(u, c);
  }
  int in = static_cast<int>(g.features.cols());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    forward_layer(h.data(), in, tape.csr, m.layers[l], tape.layers[l], tape.buf_b);
    std::swap(h, tape.buf_b);
    in = kD;
  }
  tape.last = h;
  Eigen::VectorXd r(3 * kD);
  for (int j = 0; j < kD; ++j) {
    double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
    for (int u = 0; u < n; ++u) {
      const double v = tape.last[static_cast<std::size_t>(u * kD + j)];
      sum += v;
      mx = std::max(mx, v);
    }
    r[j] = sum / n;
    r[kD + j] = mx;
    r[2 * kD + j] = sum;
  }
  tape.pooled = std::move(r);
}

double raw_output(const GatModel& m, const GraphTensor& g, Tape& tape) {
  forward_all(m, g, tape);
  return m.head_w.dot(tape.pooled) + m.head_b;
}

void backward(const GatModel& m, Tape& tape, double dy, GatModel& grad) {
  grad.head_w.noalias() += dy * tape.pooled;
  grad.head_b += dy;
  const int n = tape.csr.nodes();
  auto& dH = tape.buf_a;
  dH.assign(static_cast<std::size_t>(n * kD), 0.0);
  for (int j = 0; j < kD; ++j) {
    const double d_mean = dy * m.head_w[j] / n;
    const double d_sum = dy * m.head_w[2 * kD + j];
    int arg = 0;
    for (int u = 1; u < n; ++u) {
      if (tape.last[static_cast<std::size_t>(u * kD + j)] > tape.last[static_cast<std::size_t>(arg * kD + j)]) arg = u;
    }
    for (int u = 0; u < n; ++u) dH[static_cast<std::size_t>(u * kD + j)] = d_mean + d_sum;
    dH[static_cast<std::size_t>(arg * kD + j)] += dy * m.head_w[kD + j];
  }
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    backward_layer(tape.layers[l], tape.csr, m.layers[l], dH, grad.layers[l], tape.buf_b);
    std::swap(dH, tape.buf_b);
  }
}

Eigen::MatrixXd to_matrix(const std::vector<double>& rows, int n, int cols) {
  Eigen::MatrixXd M(n, cols);
  for (int u = 0; u < n; ++u) {
    for (int c = 0; c < cols; ++c) M(u, c) = rows[static_cast<std::size_t>(u * cols + c)];
  }
  return M;
}

Eigen::MatrixXd layer_forward(const Eigen::MatrixXd& H, const AttentionSets& attend, const GatLayerParams& p,
                              LayerTape* tape_out) {
  Csr csr;
  csr.build(attend);
  std::vector<double> h(static_cast<std::size_t>(H.size())), result;
  for (Eigen::Index u = 0; u < H.rows(); ++u) {
    for (Eigen::Index c = 0; c < H.cols(); ++c) h[static_cast<std::size_t>(u * H.cols() + c)] = H(u, c);
  }
  LayerTape local;
  LayerTape& t = tape_out ? *tape_out : local;
  forward_layer(h.data(), static_cast<int>(H.cols()), csr, p, t, result);
  return to_matrix(result, static_cast<int>(H.rows()), kD);
}

GatModel zeros_like(const GatModel& m) {
  GatModel z;
  z.layers.resize(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (const auto& W : m.layers[l].W) z.layers[l].W.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
    for (const auto& a : m.layers[l].a) z.layers[l].a.push_back(Eigen::VectorXd::Zero(a.size()));
  }
  z.head_w = Eigen::VectorXd::Zero(m.head_w.size());
  return z;
}

void check_finite(const GatModel& m) {
  auto& mm = const_cast<GatModel&>(m);
  for (auto t : parameter_tensors(mm)) {
    for (double v : t) {
      if (!std::isfinite(v)) fail(ErrorKind::kModelCorrupt, "model has non-finite parameters");
    }
  }
  if (!std::isfinite(m.target_mean) || !(m.target_std > 0.0) || !std::isfinite(m.target_std)) {
    fail(ErrorKind::kModelCorrupt, "model has invalid target normalization");
  }
}

void check_dims(const GatModel& m) {
  if (m.layers.size() != static_cast<std::size_t>(kGatLayers) || m.head_w.size() != kReadoutDim) {
    fail(ErrorKind::kShape, "model does not have the declared GAT dimensions");
  }
  int in = kNodeFeatureDim;
  for (const auto& layer : m.layers) {
    if (layer.W.size() != static_cast<std::size_t>(kGatHeads) || layer.a.size() != layer.W.size()) {
      fail(ErrorKind::kShape, "GAT layer has the wrong head count");
    }
    for (std::size_t k = 0; k < layer.W.size(); ++k) {
      if (layer.W[k].rows() != in || layer.W[k].cols() != kGatHidden || layer.a[k].size() != 2 * kGatHidden) {
        fail(ErrorKind::kShape, "GAT layer weight has the wrong shape");
      }
    }
    in = kGatHidden;
  }
}

void check_layer_input(const Eigen::MatrixXd& H, const AttentionSets& attend, const GatLayerParams& p) {
  if (p.W.empty() || p.W.size() != p.a.size()) fail(ErrorKind::kShape, "GAT layer has no heads");
  if (H.cols() != p.in_dim()) {
    fail(ErrorKind::kShape, "layer input has " + std::to_string(H.cols()) + " columns, expected " +
                                std::to_string(p.in_dim()));
  }
  if (attend.size() != static_cast<std::size_t>(H.rows())) fail(ErrorKind::kShape, "adjacency does not match node count");
  for (const auto& a : p.a) {
    if (a.size() != 2 * p.out_dim()) fail(ErrorKind::kShape, "attention vector length must be 2 * out_dim");
  }
}

struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  Adam(double rate, GatModel& model) : lr(rate) {
    for (auto t : parameter_tensors(model)) {
      m.emplace_back(t.size(), 0.0);
      v.emplace_back(t.size(), 0.0);
    }
  }

  void step(GatModel& model, GatModel& grad) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto params = parameter_tensors(model);
    auto grads = parameter_tensors(grad);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        const double gj = grads[i][j];
        m[i][j] = b1 * m[i][j] + (1.0 - b1) * gj;
        v[i][j] = b2 * v[i][j] + (1.0 - b2) * gj * gj;
        params[i][j] -= lr * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
      }
    }
  }
};

nlohmann::json matrix_json(const Eigen::MatrixXd& M) {
  std::vector<double> rows;
  rows.reserve(static_cast<std::size_t>(M.size()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) rows.push_back(M(i, j));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != static_cast<std::size_t>(rows * cols)) fail(ErrorKind::kCheckpoint, "weight array has the wrong length");
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) M(i, j2) = v[static_cast<std::size_t>(i * cols + j2)];
  }
  return M;
}

}  // namespace

GatModel GatModel::zeros() {
  GatModel m;
  int in = kNodeFeatureDim;
  for (int l = 0; l < kGatLayers; ++l) {
    GatLayerParams p;
    for (int k = 0; k < kGatHeads; ++k) {
      p.W.push_back(Eigen::MatrixXd::Zero(in, kGatHidden));
      p.a.push_back(Eigen::VectorXd::Zero(2 * kGatHidden));
    }
    m.layers.push_back(std::move(p));
    in = kGatHidden;
  }
  m.head_w = Eigen::VectorXd::Zero(kReadoutDim);
  return m;
}

std::vector<std::span<double>> parameter_tensors(GatModel& model) {
  std::vector<std::span<double>> out;
  for (auto& layer : model.layers) {
    for (std::size_t k = 0; k < layer.W.size(); ++k) {
      out.emplace_back(layer.W[k].data(), static_cast<std::size_t>(layer.W[k].size()));
      out.emplace_back(layer.a[k].data(), static_cast<std::size_t>(layer.a[k].size()));
    }
  }
  out.emplace_back(model.head_w.data(), static_cast<std::size_t>(model.head_w.size()));
  out.emplace_back(&model.head_b, 1);
  return out;
}

std::vector<std::string> parameter_names() {
  std::vector<std::string> out;
  for (int l = 0; l < kGatLayers; ++l) {
    for (int k = 0; k < kGatHeads; ++k) {
      out.push_back("layer" + std::to_string(l) + ".head" + std::to_string(k) + ".W");
      out.push_back("layer" + std::to_string(l) + ".head" + std::to_string(k) + ".a");
    }
  }
  out.emplace_back("head.w");
  out.emplace_back("head.b");
  return out;
}

std::size_t parameter_count(const GatModel& model) {
  std::size_t n = 0;
  for (auto t : parameter_tensors(const_cast<GatModel&>(model))) n += t.size();
  return n;
}

GatModel glorot_init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GatModel m = GatModel::zeros();
  const auto fill = [&](double* data, Eigen::Index size, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < size; ++i) data[i] = (2.0 * uniform01(rng) - 1.0) * limit;
  };
  for (auto& layer : m.layers) {
    for (std::size_t k = 0; k < layer.W.size(); ++k) {
      fill(layer.W[k].data(), layer.W[k].size(), static_cast<double>(layer.W[k].rows()),
           static_cast<double>(layer.W[k].cols()));
      fill(layer.a[k].data(), layer.a[k].size(), static_cast<double>(layer.a[k].size()), 1.0);
    }
  }
  fill(m.head_w.data(), m.head_w.size(), kReadoutDim, 1.0);
  return m;
}

AttentionSets attention_sets(const Eigen::MatrixXd& adjacency) {
  if (adjacency.rows() != adjacency.cols()) fail(ErrorKind::kShape, "adjacency must be square");
  AttentionSets out(static_cast<std::size_t>(adjacency.rows()));
  for (Eigen::Index u = 0; u < adjacency.rows(); ++u) {
    for (Eigen::Index v = 0; v < adjacency.cols(); ++v) {
      if (u == v || adjacency(u, v) != 0.0) out[static_cast<std::size_t>(u)].push_back(static_cast<int>(v));
    }
  }
  return out;
}

AttentionSets attention_sets(const FlatGraph& graph) {
  AttentionSets out(graph.size());
  for (std::size_t u = 0; u < graph.size(); ++u) {
    for (std::size_t v = 0; v < graph.size(); ++v) {
      if (u == v || graph.adjacent(u, v)) out[u].push_back(static_cast<int>(v));
    }
  }
  return out;
}

GraphTensor to_tensor(const FeatureGraph& fg) {
  GraphTensor t;
  t.features.resize(static_cast<Eigen::Index>(fg.features.size()), kNodeFeatureDim);
  for (std::size_t i = 0; i < fg.features.size(); ++i) {
    for (int c = 0; c < kNodeFeatureDim; ++c) t.features(static_cast<Eigen::Index>(i), c) = fg.features[i][static_cast<std::size_t>(c)];
  }
  t.attend = attention_sets(fg.flat);
  return t;
}

Eigen::MatrixXd gat_layer_forward(const Eigen::MatrixXd& H, const Eigen::MatrixXd& adjacency,
                                  const GatLayerParams& params) {
  const auto attend = attention_sets(adjacency);
  check_layer_input(H, attend, params);
  return layer_forward(H, attend, params, nullptr);
}

std::vector<std::vector<std::vector<double>>> attention_weights(const Eigen::MatrixXd& H, const AttentionSets& attend,
                                                                const GatLayerParams& params) {
  check_layer_input(H, attend, params);
  LayerTape tape;
  layer_forward(H, attend, params, &tape);
  std::vector<std::vector<std::vector<double>>> out(static_cast<std::size_t>(tape.heads));
  const auto E = tape.alpha.size() / static_cast<std::size_t>(tape.heads);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::size_t x = k * E;
    for (const auto& row : attend) {
      out[k].emplace_back(tape.alpha.begin() + static_cast<std::ptrdiff_t>(x),
                          tape.alpha.begin() + static_cast<std::ptrdiff_t>(x + row.size()));
      x += row.size();
    }
  }
  return out;
}

Eigen::VectorXd readout(const Eigen::MatrixXd& H) {
  if (H.rows() == 0) fail(ErrorKind::kShape, "readout of an empty graph");
  const auto d = H.cols();
  Eigen::VectorXd r(3 * d);
  r.segment(0, d) = H.colwise().mean().transpose();
  r.segment(d, d) = H.colwise().maxCoeff().transpose();
  r.segment(2 * d, d) = H.colwise().sum().transpose();
  return r;
}

Eigen::VectorXd embed(const GatModel& model, const GraphTensor& graph) {
  check_dims(model);
  Eigen::MatrixXd H = graph.features;
  for (const auto& layer : model.layers) {
    check_layer_input(H, graph.attend, layer);
    H = layer_forward(H, graph.attend, layer, nullptr);
  }
  return readout(H);
}

double predict(const GatModel& model, const GraphTensor& graph) {
  check_dims(model);
  check_finite(model);
  if (graph.features.cols() != kNodeFeatureDim) fail(ErrorKind::kShape, "node features must be 4-dimensional");
  thread_local Tape tape;
  const double y = raw_output(model, graph, tape);
  return y * model.target_std + model.target_mean;
}

double predict(const GatModel& model, const FeatureGraph& fg) { return predict(model, to_tensor(fg)); }

LossAndGradient loss_and_gradients(const GatModel& model, std::span<const Sample* const> batch) {
  if (batch.empty()) fail(ErrorKind::kShape, "empty batch");
  LossAndGradient out{0.0, zeros_like(model)};
  thread_local Tape tape;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const Sample* s : batch) {
    const double y = raw_output(model, s->graph, tape);
    const double r = y - (s->target - model.target_mean) / model.target_std;
    out.loss += r * r * inv_n;
    backward(model, tape, 2.0 * r * inv_n, out.gradient);
  }
  return out;
}

double normalized_mse(const GatModel& model, std::span<const Sample* const> batch) {
  if (batch.empty()) return std::numeric_limits<double>::quiet_NaN();
  thread_local Tape tape;
  double acc = 0.0;
  for (const Sample* s : batch) {
    const double r = raw_output(model, s->graph, tape) - (s->target - model.target_mean) / model.target_std;
    acc += r * r;
  }
  return acc / static_cast<double>(batch.size());
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::kConfig, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::kConfig, "batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::kConfig, "learning rate must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail(ErrorKind::kConfig, "train fraction must lie in (0, 1)");
}

TrainResult fit(std::span<const Sample> train_set, std::span<const Sample> test_set, const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate >= 0.0)) {
    fail(ErrorKind::kConfig, "invalid training configuration");
  }
  if (train_set.empty()) fail(ErrorKind::kConfig, "training split is empty");

  TrainResult res{glorot_init(cfg.seed), {}};
  GatModel& model = res.model;
  double mean = 0.0;
  for (const auto& s : train_set) mean += s.target;
  mean /= static_cast<double>(train_set.size());
  double var = 0.0;
  for (const auto& s : train_set) var += (s.target - mean) * (s.target - mean);
  var /= static_cast<double>(train_set.size());
  model.target_mean = mean;
  model.target_std = var > 0.0 ? std::sqrt(var) : 1.0;

  std::vector<const Sample*> test_ptrs;
  for (const auto& s : test_set) test_ptrs.push_back(&s);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(cfg.learning_rate, model);
  std::vector<const Sample*> batch;

  HistoryBucket bucket;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      auto lg = loss_and_gradients(model, batch);
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      adam.step(model, lg.gradient);
    }
    epoch_loss /= static_cast<double>(order.size());

    if (bucket.epochs == 0) bucket.first_epoch = epoch;
    bucket.train_mse += epoch_loss;
    bucket.test_mse += test_ptrs.empty() ? 0.0 : normalized_mse(model, test_ptrs);
    ++bucket.epochs;
    if (bucket.epochs == kHistoryBucket || epoch + 1 == cfg.epochs) {
      bucket.train_mse /= bucket.epochs;
      bucket.test_mse = test_ptrs.empty() ? std::numeric_limits<double>::quiet_NaN() : bucket.test_mse / bucket.epochs;
      res.history.buckets.push_back(bucket);
      bucket = HistoryBucket{};
    }
  }
  return res;
}

std::vector<int> split_scenarios(const std::vector<LabeledInstance>& dataset, double train_fraction,
                                 std::uint64_t seed) {
  std::map<int, std::vector<int>> by_size;
  std::map<int, int> seen;
  for (const auto& inst : dataset) {
    const int n = static_cast<int>(inst.scenario.loads_kw.size());
    if (seen.emplace(inst.scenario.id, n).second) by_size[n].push_back(inst.scenario.id);
  }
  std::mt19937_64 rng(seed);
  std::vector<int> train_ids;
  for (auto& [n, ids] : by_size) {
    std::sort(ids.begin(), ids.end());
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    auto take = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
    if (ids.size() >= 2) take = std::clamp<std::size_t>(take, 1, ids.size() - 1);
    else take = ids.size();
    for (std::size_t i = 0; i < take; ++i) train_ids.push_back(ids[order[i]]);
  }
  std::sort(train_ids.begin(), train_ids.end());
  return train_ids;
}

TrainOutcome train(const std::vector<LabeledInstance>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.size() < static_cast<std::size_t>(cfg.batch_size)) {
    fail(ErrorKind::kConfig, "dataset has " + std::to_string(dataset.size()) + " instances, fewer than the batch size " +
                                 std::to_string(cfg.batch_size));
  }
  TrainOutcome out;
  out.train_scenarios = split_scenarios(dataset, cfg.train_fraction, cfg.seed);
  std::vector<Sample> train_set, test_set;
  for (const auto& inst : dataset) {
    Sample s{to_tensor(node_features(inst.arch, inst.scenario)), inst.J};
    const bool is_train = std::binary_search(out.train_scenarios.begin(), out.train_scenarios.end(), inst.scenario.id);
    (is_train ? train_set : test_set).push_back(std::move(s));
  }
  out.result = fit(train_set, test_set, cfg);
  return out;
}

Eigen::MatrixXd export_embeddings(const GatModel& model, const std::vector<FeatureGraph>& graphs) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(graphs.size()), kReadoutDim);
  for (std::size_t i = 0; i < graphs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embed(model, to_tensor(graphs[i])).transpose();
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_dims(ckpt.model);
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["dims"] = {{"layers", kGatLayers}, {"heads", kGatHeads}, {"in", kNodeFeatureDim}, {"hidden", kGatHidden},
               {"readout", kReadoutDim}};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : ckpt.model.layers) {
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t k = 0; k < layer.W.size(); ++k) {
      heads.push_back({{"W", matrix_json(layer.W[k])}, {"a", matrix_json(layer.a[k])}});
    }
    layers.push_back({{"heads", heads}});
  }
  j["layers"] = layers;
  j["head_w"] = matrix_json(ckpt.model.head_w);
  j["head_b"] = ckpt.model.head_b;
  j["target_mean"] = ckpt.model.target_mean;
  j["target_std"] = ckpt.model.target_std;
  j["train_config"] = {{"epochs", ckpt.config.epochs},
                       {"batch_size", ckpt.config.batch_size},
                       {"learning_rate", ckpt.config.learning_rate},
                       {"seed", ckpt.config.seed},
                       {"train_fraction", ckpt.config.train_fraction}};
  j["train_scenarios"] = ckpt.train_scenarios;
  j["holdout"] = ckpt.holdout;
  write_file_atomic(path, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, "checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat || j.at("version") != kCheckpointVersion) {
      fail(ErrorKind::kCheckpoint, "unsupported checkpoint format in '" + path.string() + "'");
    }
    const auto& dims = j.at("dims");
    if (dims.at("layers") != kGatLayers || dims.at("heads") != kGatHeads || dims.at("in") != kNodeFeatureDim ||
        dims.at("hidden") != kGatHidden || dims.at("readout") != kReadoutDim) {
      fail(ErrorKind::kCheckpoint, "checkpoint dimensions do not match the GAT architecture");
    }
    Checkpoint c;
    c.model = GatModel::zeros();
    const auto& layers = j.at("layers");
    if (layers.size() != static_cast<std::size_t>(kGatLayers)) fail(ErrorKind::kCheckpoint, "wrong layer count");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& heads = layers[l].at("heads");
      if (heads.size() != static_cast<std::size_t>(kGatHeads)) fail(ErrorKind::kCheckpoint, "wrong head count");
      auto& p = c.model.layers[l];
      for (std::size_t k = 0; k < heads.size(); ++k) {
        p.W[k] = matrix_from_json(heads[k].at("W"), p.W[k].rows(), p.W[k].cols());
        p.a[k] = matrix_from_json(heads[k].at("a"), p.a[k].size(), 1);
      }
    }
    c.model.head_w = matrix_from_json(j.at("head_w"), kReadoutDim, 1);
    c.model.head_b = j.at("head_b").get<double>();
    c.model.target_mean = j.at("target_mean").get<double>();
    c.model.target_std = j.at("target_std").get<double>();
    const auto& tc = j.at("train_config");
    c.config.epochs = tc.at("epochs").get<int>();
    c.config.batch_size = tc.at("batch_size").get<int>();
    c.config.learning_rate = tc.at("learning_rate").get<double>();
    c.config.seed = tc.at("seed").get<std::uint64_t>();
    c.config.train_fraction = tc.at("train_fraction").get<double>();
    c.train_scenarios = j.at("train_scenarios").get<std::vector<int>>();
    c.holdout = j.at("holdout").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, "checkpoint '" + path.string() + "' is malformed: " + e.what());
  }
}

}  // namespace thermograph
