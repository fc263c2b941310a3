#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "helpers.hpp"
#include "tactile/error.hpp"
#include "tactile/model.hpp"
#include "tactile/pretrain.hpp"

using namespace tactile;
using testing::error_code_of;

namespace {

const TubeletGrid kPaperGrid = TubeletGrid::make({1, 45, 32, 32}, {5, 4});

double brute_bce(double logit, double label) {
  double p = 1.0 / (1.0 + std::exp(-logit));
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

ModelConfig small_model(std::size_t classes = 2) {
  ModelConfig cfg;
  cfg.input_shape = {1, 10, 8, 8};
  cfg.tubelet = {5, 4};
  cfg.embedding.dim = 16;
  cfg.encoder = {1, 16, 2, 32, 0.0, 0};
  cfg.num_classes = classes;
  return cfg;
}

}  // namespace

TEST_SUITE("spatial-group masking") {
  TEST_CASE("paper grid at ratio 0.5 masks 32 groups and 288 tubelets") {
    Rng rng(1);
    const auto plan = plan_spatial_mask(kPaperGrid, 0.5, rng);
    CHECK(plan.masked_groups.size() == 32);
    CHECK(plan.masked_tubelets.size() == 288);
  }

  TEST_CASE("ratio zero is an empty plan; out-of-range ratios are rejected") {
    Rng rng(1);
    CHECK(plan_spatial_mask(kPaperGrid, 0.0, rng).empty());
    CHECK(error_code_of([&] { plan_spatial_mask(kPaperGrid, 1.0, rng); }) == ErrorCode::kInvalidArgument);
    CHECK(error_code_of([&] { plan_spatial_mask(kPaperGrid, -0.1, rng); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("masked set is exactly the union of whole chosen groups") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const double ratio = 0.1 * (trial % 10);
      const auto plan = plan_spatial_mask(kPaperGrid, ratio, rng);
      const std::set<std::size_t> groups(plan.masked_groups.begin(), plan.masked_groups.end());
      CHECK(groups.size() == static_cast<std::size_t>(std::llround(ratio * 64)));
      for (std::size_t s = 0; s < kPaperGrid.n_tube; ++s)
        CHECK(plan.is_masked(s) == (groups.count(kPaperGrid.spatial_index(s)) == 1));
      CHECK(plan.masked_tubelets.size() == groups.size() * kPaperGrid.n_temp);
    }
  }

  TEST_CASE("same seed, same plan; groups are drawn uniformly") {
    Rng a(7), b(7);
    CHECK(plan_spatial_mask(kPaperGrid, 0.3, a).masked_groups == plan_spatial_mask(kPaperGrid, 0.3, b).masked_groups);
    // Each group should be chosen about half the time at ratio 0.5.
    const auto g = TubeletGrid::make({1, 5, 16, 16}, {5, 4});
    std::vector<int> hits(g.n_space, 0);
    Rng rng(3);
    const int trials = 4000;
    for (int i = 0; i < trials; ++i)
      for (std::size_t s : plan_spatial_mask(g, 0.5, rng).masked_groups) ++hits[s];
    for (int h : hits) CHECK(std::abs(h / double(trials) - 0.5) < 0.04);
  }
}

TEST_SUITE("mask application") {
  struct Setup {
    StatModel model{small_model(), 3};
    TubeletSequence seq = tokenize(testing::random_tensor({1, 10, 8, 8}, 4), {5, 4});
  };

  TEST_CASE("empty plan leaves the rows untouched; masked rows carry the mask embedding") {
    Setup s;
    Tape tape(s.model.params());
    const Var rows = project_tubelets(tape, s.model.embedding(), s.seq.tubelets);
    Rng rng(1);
    const auto none = plan_spatial_mask(s.seq.grid, 0.0, rng);
    CHECK(tape.value(apply_mask(tape, rows, none, s.model.embedding())) == tape.value(rows));

    const auto plan = plan_spatial_mask(s.seq.grid, 0.5, rng);
    const Matrix& masked = tape.value(apply_mask(tape, rows, plan, s.model.embedding()));
    const Matrix& token = s.model.params().value(s.model.embedding().mask_token);
    for (std::size_t i = 0; i < s.seq.grid.n_tube; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (plan.is_masked(i))
        CHECK(masked.row(r) == token.row(0));
      else
        CHECK(masked.row(r) == tape.value(rows).row(r));
    }
  }

  TEST_CASE("plan for a different grid is rejected") {
    Setup s;
    Tape tape(s.model.params());
    const Var rows = project_tubelets(tape, s.model.embedding(), s.seq.tubelets);
    Rng rng(1);
    const auto plan = plan_spatial_mask(kPaperGrid, 0.5, rng);
    CHECK(error_code_of([&] { apply_mask(tape, rows, plan, s.model.embedding()); }) == ErrorCode::kShapeMismatch);
  }
}

TEST_SUITE("reconstruction loss") {
  TEST_CASE("perfect reconstruction is zero, an offset of one is one") {
    const auto seq = tokenize(testing::random_tensor({1, 10, 8, 8}, 1), {5, 4});
    Rng rng(2);
    const auto plan = plan_spatial_mask(seq.grid, 0.5, rng);
    std::vector<Reconstruction> exact, shifted;
    for (std::size_t s : plan.masked_tubelets) {
      const auto& v = seq.tubelets[s].values;
      exact.push_back({s, {v.begin(), v.end()}});
      shifted.push_back(exact.back());
      for (auto& x : shifted.back().values) x += 1.0;
    }
    CHECK(mtr_loss(seq, exact, plan) == 0.0);
    CHECK(mtr_loss(seq, shifted, plan) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("matches a brute-force loop over masked cells on random instances") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      const Shape4 shape{1, 4, 8, 4};  // two spatial groups with P = 4
      const auto x = testing::random_tensor(shape, 100 + trial);
      const auto seq = tokenize(x, {2, 4});
      Rng plan_rng(trial);
      const auto plan = plan_spatial_mask(seq.grid, 0.5, plan_rng);
      std::vector<Reconstruction> rec;
      for (std::size_t s : plan.masked_tubelets) {
        Reconstruction r{s, {}};
        for (std::size_t i = 0; i < 32; ++i) r.values.push_back(normal(rng));
        rec.push_back(r);
      }
      // Brute force straight from tensor coordinates.
      double sum = 0.0;
      for (const auto& r : rec) {
        const std::size_t ks = seq.grid.spatial_index(r.sequence_index), kt = seq.grid.temporal_index(r.sequence_index);
        double per = 0.0;
        std::size_t k = 0;
        for (std::size_t f = 0; f < 2; ++f)
          for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t c = 0; c < 4; ++c, ++k) {
              const double d = x.at(0, kt * 2 + f, ks * 4 + y, c) - r.values[k];
              per += d * d;
            }
        sum += per / 32.0;
      }
      const double expect = sum / double(rec.size());
      CHECK(std::abs(mtr_loss(seq, rec, plan) - expect) <= 1e-6);
      // Index-keyed: reordering the reconstructions changes nothing.
      std::reverse(rec.begin(), rec.end());
      CHECK(std::abs(mtr_loss(seq, rec, plan) - expect) <= 1e-12);
    }
  }

  TEST_CASE("nothing masked and missing reconstructions are errors") {
    const auto seq = tokenize(testing::random_tensor({1, 10, 8, 8}, 1), {5, 4});
    Rng rng(2);
    const auto none = plan_spatial_mask(seq.grid, 0.0, rng);
    CHECK(testing::error_message_of([&] { mtr_loss(seq, {}, none); }) == "nothing masked");
    const auto plan = plan_spatial_mask(seq.grid, 0.5, rng);
    CHECK(error_code_of([&] { mtr_loss(seq, {}, plan); }) == ErrorCode::kMissingIndex);
  }
}

TEST_SUITE("order pairs") {
  TEST_CASE("earlier-than labels and their complement") {
    const auto g = TubeletGrid::make({1, 30, 4, 4}, {5, 4});  // one patch, six windows
    Rng rng(1);
    const auto plan = plan_spatial_mask(g, 0.0, rng);
    const auto batch = sample_pairs(g, plan, 30, rng);  // all feasible ordered pairs
    CHECK(batch.pairs.size() == 30);
    bool saw_2_5 = false, saw_5_2 = false;
    for (const auto& p : batch.pairs) {
      if (p.first == 2 && p.second == 5) {
        saw_2_5 = true;
        CHECK(p.label == 1.0);
      }
      if (p.first == 5 && p.second == 2) {
        saw_5_2 = true;
        CHECK(p.label == 0.0);
      }
    }
    CHECK(saw_2_5);
    CHECK(saw_5_2);
  }

  TEST_CASE("1000 pairs on the paper grid avoid the mask and equal windows") {
    Rng rng(4);
    const auto plan = plan_spatial_mask(kPaperGrid, 0.5, rng);
    CHECK(feasible_pair_count(kPaperGrid, plan) == 288 * 288 - 9 * 32 * 32);
    const auto batch = sample_pairs(kPaperGrid, plan, 1000, rng);
    REQUIRE(batch.pairs.size() == 1000);
    std::set<std::pair<std::size_t, std::size_t>> distinct;
    for (const auto& p : batch.pairs) {
      CHECK_FALSE(plan.is_masked(p.first));
      CHECK_FALSE(plan.is_masked(p.second));
      CHECK(kPaperGrid.temporal_index(p.first) != kPaperGrid.temporal_index(p.second));
      CHECK(p.label == (kPaperGrid.temporal_index(p.first) < kPaperGrid.temporal_index(p.second) ? 1.0 : 0.0));
      distinct.emplace(p.first, p.second);
    }
    CHECK(distinct.size() == 1000);  // no repeats within one draw
  }

  TEST_CASE("feasible count matches brute-force enumeration and caps n_comp") {
    const auto g = TubeletGrid::make({1, 10, 8, 8}, {5, 4});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto plan = plan_spatial_mask(g, 0.5, rng);
      std::size_t brute = 0;
      for (std::size_t i = 0; i < g.n_tube; ++i)
        for (std::size_t j = 0; j < g.n_tube; ++j)
          brute += !plan.is_masked(i) && !plan.is_masked(j) && g.temporal_index(i) != g.temporal_index(j);
      CHECK(feasible_pair_count(g, plan) == brute);
      CHECK(sample_pairs(g, plan, 1000, rng).pairs.size() == brute);
    }
  }

  TEST_CASE("a single window has no feasible pair") {
    const auto g = TubeletGrid::make({1, 5, 8, 8}, {5, 4});
    Rng rng(1);
    const auto plan = plan_spatial_mask(g, 0.5, rng);
    CHECK(error_code_of([&] { sample_pairs(g, plan, 10, rng); }) == ErrorCode::kInfeasiblePairs);
  }
}

TEST_SUITE("order loss") {
  TEST_CASE("zero head gives ln 2; saturated correct logits give almost nothing") {
    StatModel model(small_model(), 1);
    const auto& heads = model.pretrain_heads();
    model.params().value(heads.frame_weight).setZero();
    model.params().value(heads.frame_bias).setZero();
    const Matrix enc = Matrix::Random(model.grid().n_tube + 1, 16);
    PairBatch batch{{{0, 5, 1.0}, {6, 1, 0.0}, {2, 7, 1.0}}};
    CHECK(temporal_loss(batch, enc, model.params(), heads) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    ParameterStore none;
    Tape tape(none);
    const Var z = tape.constant((Matrix(3, 1) << 30.0, -30.0, 30.0).finished());
    const double labels[] = {1.0, 0.0, 1.0};
    CHECK(tape.value(tape.bce_with_logits(z, labels))(0, 0) < 1e-5);
  }

  TEST_CASE("matches scalar brute-force BCE on random five-pair instances") {
    StatModel model(small_model(), 2);
    const auto& heads = model.pretrain_heads();
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, model.grid().n_tube - 1);
    for (int trial = 0; trial < 100; ++trial) {
      Matrix enc(model.grid().n_tube + 1, 16);
      for (auto& v : enc.reshaped()) v = normal(rng);
      for (auto& v : model.params().value(heads.frame_weight).reshaped()) v = normal(rng);
      model.params().value(heads.frame_bias)(0, 0) = normal(rng);
      PairBatch batch;
      for (int k = 0; k < 5; ++k) {
        std::size_t i = pick(rng), j = pick(rng);
        batch.pairs.push_back({i, j, model.grid().temporal_index(i) < model.grid().temporal_index(j) ? 1.0 : 0.0});
      }
      const Matrix& w = model.params().value(heads.frame_weight);
      double expect = 0.0;
      for (const auto& p : batch.pairs) {
        double logit = model.params().value(heads.frame_bias)(0, 0);
        for (int d = 0; d < 16; ++d) logit += w(0, d) * enc(p.first + 1, d) + w(0, 16 + d) * enc(p.second + 1, d);
        expect += brute_bce(logit, p.label) / 5.0;
      }
      CHECK(std::abs(temporal_loss(batch, enc, model.params(), heads) - expect) <= 1e-6);
    }
  }

  TEST_CASE("empty batch is an error") {
    StatModel model(small_model(), 1);
    const Matrix enc = Matrix::Zero(model.grid().n_tube + 1, 16);
    CHECK(error_code_of([&] { temporal_loss({}, enc, model.params(), model.pretrain_heads()); }) ==
          ErrorCode::kEmptyBatch);
  }
}

TEST_SUITE("combined objective") {
  TEST_CASE("hand-set parts 0.25 and 0.5 at beta 2 combine to 1.25") {
    ParameterStore none;
    Tape tape(none);
    const Var parts[] = {tape.constant(Matrix::Constant(1, 1, 0.25)), tape.constant(Matrix::Constant(1, 1, 0.5))};
    const double weights[] = {1.0, 2.0};
    CHECK(tape.value(tape.sum_scalars(parts, weights))(0, 0) == 1.25);
  }

  TEST_CASE("beta scales the order term and beta 0 leaves MTR alone") {
    StatModel model(small_model(), 5);
    const auto seq = tokenize(testing::random_tensor({1, 10, 8, 8}, 6), {5, 4});
    const SampleDraw draw{1, 0, 0, false};
    auto run = [&](double beta) {
      PretrainOptions o;
      o.beta = beta;
      Tape tape(model.params());
      PretrainSampleLoss parts;
      const Var total = pretrain_objective(tape, model, seq, o, draw, &parts);
      CHECK(tape.value(total)(0, 0) == parts.total);
      return parts;
    };
    const auto b0 = run(0.0), b1 = run(1.0), b2 = run(2.0);
    CHECK(b0.total == b0.mtr);
    CHECK(b1.mtr == b0.mtr);
    CHECK(b1.total == doctest::Approx(b1.mtr + b1.temporal).epsilon(1e-14));
    CHECK(b2.total == doctest::Approx(b2.mtr + 2.0 * b2.temporal).epsilon(1e-14));
    CHECK(b1.temporal > 0.0);

    // Reference MTR through the plain loss and the model's own reconstruction.
    Rng mask_rng = make_rng(draw.seed, {kStreamMask, draw.epoch, draw.sample_id});
    const auto plan = plan_spatial_mask(seq.grid, 0.5, mask_rng);
    Tape tape(model.params());
    const Var enc = model.encode(tape, seq, &plan);
    const Matrix& rows = tape.value(reconstruct(tape, enc, plan, model.pretrain_heads()));
    std::vector<Reconstruction> rec;
    for (std::size_t k = 0; k < plan.masked_tubelets.size(); ++k) {
      const auto r = rows.row(static_cast<Eigen::Index>(k));
      rec.push_back({plan.masked_tubelets[k], {r.data(), r.data() + r.size()}});
    }
    CHECK(std::abs(mtr_loss(seq, rec, plan) - b0.mtr) <= 1e-9);
  }

  TEST_CASE("step results do not depend on the thread count") {
    StatModel model(small_model(), 5);
    std::vector<TubeletSequence> batch;
    std::vector<SampleDraw> draws;
    for (std::uint64_t i = 0; i < 5; ++i) {
      batch.push_back(tokenize(testing::random_tensor({1, 10, 8, 8}, 20 + i), {5, 4}));
      draws.push_back({3, 1, i, true});
    }
    const auto a = pretrain_step(model, batch, draws, {}, 1);
    const auto b = pretrain_step(model, batch, draws, {}, 3);
    CHECK(a.loss == b.loss);
    for (ParamId id = 0; id < model.params().size(); ++id) CHECK(a.gradients[id] == b.gradients[id]);
    CHECK(a.loss == doctest::Approx(a.mtr + a.temporal).epsilon(1e-12));
  }

  TEST_CASE("200 steps on 32 synthetic samples lower the smoothed loss") {
    SyntheticTaskSpec spec;
    spec.mode = SyntheticMode::kMixed;
    spec.shape = {1, 10, 16, 16};
    spec.classes = 4;
    spec.train_per_class = 8;
    spec.validation_per_class = spec.test_per_class = 0;
    spec.tubelet_frames = 5;
    spec.patch = 4;
    const auto data = generate_synthetic(spec);
    const auto inputs = prepare(data.train, compute_stats(data.train), {5, 4});
    REQUIRE(inputs.size() == 32);

    auto cfg = small_model(4);
    cfg.input_shape = spec.shape;
    cfg.encoder.dropout = 0.1;
    StatModel model(cfg, 9);
    Adam adam(model.params(), 1e-3, 1e-4);
    std::vector<double> losses;
    for (std::size_t step = 0; step < 200; ++step) {
      std::vector<TubeletSequence> batch;
      std::vector<SampleDraw> draws;
      for (std::size_t k = 0; k < 8; ++k) {
        const std::size_t i = (step * 8 + k) % 32;
        batch.push_back(inputs[i]);
        draws.push_back({1, step / 4, i, true});
      }
      const auto r = pretrain_step(model, batch, draws, {});
      adam.step(model.params(), r.gradients);
      losses.push_back(r.loss);
    }
    auto window = [&](std::size_t end) {
      return std::accumulate(losses.begin() + static_cast<std::ptrdiff_t>(end - 20),
                             losses.begin() + static_cast<std::ptrdiff_t>(end), 0.0) / 20.0;
    };
    MESSAGE("smoothed loss " << window(20) << " -> " << window(200));
    for (std::size_t end = 40; end <= 200; end += 20) CHECK(window(end) < window(end - 20));
  }
}
