#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>

#include "thermograph/archgraph.hpp"
#include "thermograph/error.hpp"
#include "thermograph/gnn.hpp"
#include "thermograph/io.hpp"

using namespace thermograph;

namespace {

GraphTensor graph_of(const char* key, std::vector<double> loads) {
  return to_tensor(node_features(parse_architecture(key), Scenario{0, std::move(loads)}));
}

GraphTensor permuted(const GraphTensor& g, const std::vector<int>& perm) {
  // Vertex v of g becomes vertex perm[v].
  GraphTensor out;
  const auto n = g.features.rows();
  out.features.resize(n, g.features.cols());
  out.attend.resize(g.attend.size());
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto pv = static_cast<std::size_t>(perm[static_cast<std::size_t>(v)]);
    out.features.row(static_cast<Eigen::Index>(pv)) = g.features.row(v);
    for (int u : g.attend[static_cast<std::size_t>(v)]) out.attend[pv].push_back(perm[static_cast<std::size_t>(u)]);
    std::sort(out.attend[pv].begin(), out.attend[pv].end());
  }
  return out;
}

GatModel normalized(GatModel m, double mean, double stddev) {
  m.target_mean = mean;
  m.target_std = stddev;
  return m;
}

std::string tmp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(Gat, ParameterLayout) {
  auto m = GatModel::zeros();
  EXPECT_EQ(parameter_tensors(m).size(), parameter_names().size());
  // 4 heads x (4x16 + 32) + 2 layers x 4 heads x (16x16 + 32) + 48 + 1
  EXPECT_EQ(parameter_count(m), 4u * (64 + 32) + 8u * (256 + 32) + 49u);
}

TEST(Gat, SingleIsolatedNode) {
  const auto m = glorot_init(1);
  Eigen::MatrixXd H(1, 4);
  H << 0.3, -0.2, 0.5, 1.0;
  const auto out = gat_layer_forward(H, Eigen::MatrixXd::Zero(1, 1), m.layers[0]);
  Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(kGatHidden);
  for (const auto& W : m.layers[0].W) expected += (H * W).array().tanh().matrix();
  expected /= kGatHeads;
  EXPECT_LE((out - expected).cwiseAbs().maxCoeff(), 1e-15);
  const auto alpha = attention_weights(H, {{0}}, m.layers[0]);
  for (const auto& head : alpha) EXPECT_EQ(head[0][0], 1.0);
}

TEST(Gat, AttentionRowsSumToOne) {
  const auto m = glorot_init(2);
  const auto g = graph_of("M;6;{[0{[1{[2],[3]}],[4,5]}]}", {12, 10, 8, 6, 5, 4});
  Eigen::MatrixXd H = g.features;
  for (const auto& layer : m.layers) {
    for (const auto& head : attention_weights(H, g.attend, layer)) {
      for (const auto& row : head) EXPECT_LE(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0), 1e-12);
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(H.rows(), H.rows());
    for (std::size_t u = 0; u < g.attend.size(); ++u) {
      for (int v : g.attend[u]) {
        if (v != static_cast<int>(u)) A(static_cast<Eigen::Index>(u), v) = 1.0;
      }
    }
    H = gat_layer_forward(H, A, layer);
  }
}

TEST(Gat, LayerPermutationEquivariance) {
  const auto m = glorot_init(3);
  const auto g = graph_of("S;4;{[0,1],[2],[3]}", {4, 9, 13, 16});
  std::vector<int> perm(g.attend.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto pg = permuted(g, perm);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(g.features.rows(), g.features.rows());
    Eigen::MatrixXd PA = A;
    for (std::size_t u = 0; u < g.attend.size(); ++u) {
      for (int v : g.attend[u]) {
        if (v == static_cast<int>(u)) continue;
        A(static_cast<Eigen::Index>(u), v) = 1.0;
        PA(perm[u], perm[static_cast<std::size_t>(v)]) = 1.0;
      }
    }
    const auto out = gat_layer_forward(g.features, A, m.layers[0]);
    const auto pout = gat_layer_forward(pg.features, PA, m.layers[0]);
    for (std::size_t v = 0; v < perm.size(); ++v) {
      EXPECT_LE((out.row(static_cast<Eigen::Index>(v)) - pout.row(perm[v])).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Gat, PredictPermutationInvariant) {
  const auto m = normalized(glorot_init(5), 600, 250);
  std::mt19937_64 rng(6);
  for (const char* key : {"S;3;{[0,1],[2]}", "M;5;{[0{[1{[2],[3]}],[4]}]}", "S;6;{[0],[1,2],[3,4,5]}"}) {
    const auto arch = parse_architecture(key);
    std::vector<double> loads;
    for (int i = 0; i < arch.n_cphx; ++i) loads.push_back(4.0 + 1.7 * i);
    const auto g = graph_of(key, loads);
    const double base = predict(m, g);
    std::vector<int> perm(g.attend.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int rep = 0; rep < 30; ++rep) {
      std::shuffle(perm.begin(), perm.end(), rng);
      EXPECT_LE(std::abs(predict(m, permuted(g, perm)) - base), 1e-9);
    }
  }
}

TEST(Gat, ZeroHeadPredictsMean) {
  auto m = normalized(glorot_init(7), 812.0, 100.0);
  m.head_w.setZero();
  m.head_b = 0.0;
  EXPECT_EQ(predict(m, graph_of("S;2;{[0],[1]}", {5, 6})), 812.0);
  EXPECT_EQ(predict(m, graph_of("S;3;{[0,1,2]}", {5, 6, 16})), 812.0);
}

TEST(Readout, Definitions) {
  Eigen::MatrixXd one(1, 16);
  one.row(0) = Eigen::RowVectorXd::LinSpaced(16, -1, 1);
  const Eigen::VectorXd r1 = readout(one);
  const Eigen::VectorXd row = one.row(0).transpose();
  EXPECT_TRUE(r1.segment(0, 16) == row);
  EXPECT_TRUE(r1.segment(16, 16) == row);
  EXPECT_TRUE(r1.segment(32, 16) == row);
  Eigen::MatrixXd two(2, 16);
  two << one, one;
  const Eigen::VectorXd r2 = readout(two);
  EXPECT_TRUE(r2.segment(0, 32) == r1.segment(0, 32));
  EXPECT_TRUE(r2.segment(32, 16) == 2.0 * r1.segment(32, 16));
  EXPECT_THROW(readout(Eigen::MatrixXd(0, 16)), Error);
}

TEST(Gat, ShapeErrors) {
  const auto m = glorot_init(1);
  try {
    gat_layer_forward(Eigen::MatrixXd::Zero(3, 5), Eigen::MatrixXd::Zero(3, 3), m.layers[0]);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
  EXPECT_THROW(gat_layer_forward(Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(2, 2), m.layers[0]), Error);
}

TEST(Gat, CorruptModel) {
  auto m = glorot_init(1);
  m.layers[1].W[2](3, 3) = std::nan("");
  try {
    predict(m, graph_of("S;1;{[0]}", {5}));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kModelCorrupt);
  }
}

// Central differences on the batch loss, compared tensor by tensor.
TEST(Gradients, MatchFiniteDifferences) {
  const std::vector<Sample> samples{
      {graph_of("S;1;{[0]}", {9}), 700.0},
      {graph_of("M;3;{[0{[1],[2]}]}", {12, 5, 8}), 450.0},
      {graph_of("M;6;{[0{[1{[2],[3]}],[4,5]}]}", {12, 10, 8, 6, 5, 4}), 300.0}};
  ASSERT_EQ(samples[0].graph.features.rows(), 2);
  ASSERT_EQ(samples[1].graph.features.rows(), 5);
  ASSERT_EQ(samples[2].graph.features.rows(), 9);
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    GatModel m = normalized(glorot_init(seed), 500.0, 150.0);
    m.head_b = 0.1;
    std::vector<const Sample*> batch;
    for (const auto& s : samples) batch.push_back(&s);
    auto analytic = loss_and_gradients(m, batch);
    EXPECT_NEAR(analytic.loss, normalized_mse(m, batch), 1e-14);
    auto params = parameter_tensors(m);
    auto grads = parameter_tensors(analytic.gradient);
    const auto names = parameter_names();
    const double eps = 1e-5;
    for (std::size_t t = 0; t < params.size(); ++t) {
      double diff2 = 0.0, ref2 = 0.0, ana2 = 0.0;
      for (std::size_t j = 0; j < params[t].size(); ++j) {
        const double keep = params[t][j];
        params[t][j] = keep + eps;
        const double up = normalized_mse(m, batch);
        params[t][j] = keep - eps;
        const double down = normalized_mse(m, batch);
        params[t][j] = keep;
        const double fd = (up - down) / (2 * eps);
        diff2 += (fd - grads[t][j]) * (fd - grads[t][j]);
        ref2 += fd * fd;
        ana2 += grads[t][j] * grads[t][j];
      }
      const double rel = std::sqrt(diff2) / std::max({std::sqrt(ref2), std::sqrt(ana2), 1e-12});
      EXPECT_LT(rel, 1e-4) << names[t] << " seed " << seed;
    }
  }
}

TEST(Gradients, ExactFitHasZeroLossAndGradient) {
  auto m = glorot_init(21);
  Sample s{graph_of("S;2;{[0],[1]}", {8, 9}), 0.0};
  s.target = predict(m, s.graph);
  const Sample* batch[] = {&s};
  const auto lg = loss_and_gradients(m, batch);
  EXPECT_EQ(lg.loss, 0.0);
  for (auto t : parameter_tensors(const_cast<GatModel&>(lg.gradient))) {
    for (double g : t) EXPECT_EQ(g, 0.0);
  }
}

TEST(Gradients, LossIsQuadraticInResidual) {
  const auto m = normalized(glorot_init(22), 0.0, 1.0);
  Sample s{graph_of("S;2;{[0],[1]}", {8, 9}), 0.0};
  const double y = predict(m, s.graph);
  s.target = y - 1.5;
  const Sample* batch[] = {&s};
  const double l1 = normalized_mse(m, batch);
  s.target = y - 3.0;
  EXPECT_NEAR(normalized_mse(m, batch), 4.0 * l1, 1e-12);
}

namespace {

std::vector<Sample> small_dataset(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(4, 16);
  const auto archs = enumerate_single_split(3);
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    const auto& a = archs[static_cast<std::size_t>(i) % archs.size()];
    out.push_back({to_tensor(node_features(a, Scenario{i, {d(rng), d(rng), d(rng)}})), 200.0 + 150.0 * d(rng)});
  }
  return out;
}

}  // namespace

TEST(Training, ZeroLearningRateKeepsInitialization) {
  const auto data = small_dataset(1, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 1;
  cfg.learning_rate = 0.0;
  cfg.seed = 42;
  const auto res = fit(data, {}, cfg);
  auto a = res.model, b = glorot_init(42);
  auto pa = parameter_tensors(a), pb = parameter_tensors(b);
  for (std::size_t t = 0; t < pa.size(); ++t) EXPECT_TRUE(std::equal(pa[t].begin(), pa[t].end(), pb[t].begin()));
  EXPECT_EQ(res.history.buckets.size(), 1u);
  EXPECT_EQ(res.history.buckets[0].epochs, 2);
  EXPECT_TRUE(std::isnan(res.history.buckets[0].test_mse));
}

TEST(Training, MemorizesTenInstances) {
  const auto data = small_dataset(10, 2);
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch_size = 10;
  cfg.seed = 3;
  const auto res = fit(data, {}, cfg);
  std::vector<const Sample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  EXPECT_LT(normalized_mse(res.model, batch), 1e-3);
  EXPECT_EQ(res.history.buckets.size(), 20u);
  EXPECT_LT(res.history.buckets.back().train_mse, res.history.buckets.front().train_mse);
}

TEST(Training, BitIdenticalUnderSameSeed) {
  const auto data = small_dataset(30, 3);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.seed = 9;
  const std::span<const Sample> all(data);
  auto r1 = fit(all.subspan(0, 20), all.subspan(20), cfg);
  auto r2 = fit(all.subspan(0, 20), all.subspan(20), cfg);
  auto p1 = parameter_tensors(r1.model), p2 = parameter_tensors(r2.model);
  for (std::size_t t = 0; t < p1.size(); ++t) EXPECT_TRUE(std::equal(p1[t].begin(), p1[t].end(), p2[t].begin()));
  EXPECT_EQ(r1.history.buckets.back().test_mse, r2.history.buckets.back().test_mse);
}

TEST(Training, ScenarioSplit) {
  std::vector<LabeledInstance> data;
  const auto archs = enumerate_single_split(2);
  for (int s = 0; s < 100; ++s) {
    for (const auto& a : archs) data.push_back({a, Scenario{s, {5, 6}}, 300.0 + s, 1, false});
  }
  const auto ids = split_scenarios(data, 0.3, 5);
  EXPECT_EQ(ids.size(), 30u);
  EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
  EXPECT_EQ(ids, split_scenarios(data, 0.3, 5));

  // Stratified by CPHX count: each size keeps its own 30 %.
  for (int s = 100; s < 110; ++s) data.push_back({parse_architecture("S;3;{[0,1,2]}"), Scenario{s, {5, 6, 7}}, 400.0, 1, false});
  const auto mixed = split_scenarios(data, 0.3, 5);
  EXPECT_EQ(std::count_if(mixed.begin(), mixed.end(), [](int id) { return id >= 100; }), 3);
}

TEST(Training, TrainKeepsScenariosDisjoint) {
  std::vector<LabeledInstance> data;
  const auto archs = enumerate_single_split(3);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(4, 16);
  for (int s = 0; s < 10; ++s) {
    const Scenario sc{s, {d(rng), d(rng), d(rng)}};
    for (const auto& a : archs) data.push_back({a, sc, 300.0 + d(rng), 1, false});
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 20;
  const auto out = train(data, cfg);
  EXPECT_EQ(out.train_scenarios.size(), 3u);
  EXPECT_FALSE(std::isnan(out.result.history.buckets.back().test_mse));
  cfg.batch_size = 1000;
  try {
    train(data, cfg);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Embeddings, ShapeAndInvariance) {
  const auto m = glorot_init(4);
  const auto fg = node_features(parse_architecture("S;3;{[0],[1,2]}"), Scenario{0, {7, 8, 9}});
  const auto e = export_embeddings(m, {fg, fg});
  EXPECT_EQ(e.rows(), 2);
  EXPECT_EQ(e.cols(), kReadoutDim);
  const auto g = to_tensor(fg);
  const auto pe = embed(m, permuted(g, {2, 0, 4, 1, 3}));
  EXPECT_LE((pe - e.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint c{normalized(glorot_init(5), 654.321, 123.456), TrainConfig{}, {1, 4, 9}, "S5"};
  c.config.seed = 77;
  c.config.epochs = 1234;
  const auto path = tmp_path("thermograph_ckpt_roundtrip.json");
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  auto a = c.model, b = back.model;
  auto pa = parameter_tensors(a), pb = parameter_tensors(b);
  for (std::size_t t = 0; t < pa.size(); ++t) EXPECT_TRUE(std::equal(pa[t].begin(), pa[t].end(), pb[t].begin()));
  EXPECT_EQ(back.model.target_mean, c.model.target_mean);
  EXPECT_EQ(back.model.target_std, c.model.target_std);
  EXPECT_EQ(back.config.seed, 77u);
  EXPECT_EQ(back.config.epochs, 1234);
  EXPECT_EQ(back.train_scenarios, c.train_scenarios);
  EXPECT_EQ(back.holdout, "S5");
  const auto g = graph_of("S;2;{[0],[1]}", {5, 15});
  EXPECT_EQ(predict(back.model, g), predict(c.model, g));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMismatchedOrMalformed) {
  Checkpoint c{glorot_init(5), TrainConfig{}, {}, ""};
  const auto path = tmp_path("thermograph_ckpt_bad.json");
  save_checkpoint(c, path);
  std::string text = read_file(path);
  const auto pos = text.find("\"hidden\": 16");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 12, "\"hidden\": 32");
  write_file_atomic(path, text);
  for (const std::string& content : {text, std::string("{not json"), std::string("{\"format\": \"other\"}")}) {
    write_file_atomic(path, content);
    try {
      load_checkpoint(path);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kCheckpoint);
    }
  }
  std::filesystem::remove(path);
}
