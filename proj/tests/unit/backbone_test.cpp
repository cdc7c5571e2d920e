#include "test_prelude.hpp"

#include <filesystem>

#include "gesture/backbone.hpp"
#include "gesture/error.hpp"
#include "gesture/layer_spec.hpp"
#include "gesture/model.hpp"

using namespace gesture;

namespace {

// Output (C,T,H,W) after each Table I row for a (3,16,224,224) input.
const std::vector<Shape> kTableShapes = {
    {16, 16, 112, 112}, {16, 16, 112, 112}, {24, 8, 56, 56}, {24, 8, 56, 56}, {40, 8, 28, 28},
    {40, 8, 28, 28},    {40, 8, 28, 28},    {80, 8, 14, 14}, {80, 8, 14, 14}, {80, 8, 14, 14},
    {80, 8, 14, 14},    {80, 8, 14, 14},    {112, 4, 14, 14}, {112, 4, 14, 14}, {160, 4, 7, 7},
    {160, 4, 7, 7},     {160, 4, 7, 7},     {160, 4, 7, 7},  {960, 4, 7, 7}};

BackboneConfig tiny_config() {
  auto c = desk_backbone_config();
  c.input_spatial = 32;
  c.input_temporal = 4;
  return c;
}

}  // namespace

TEST_SUITE("backbone") {
  TEST_CASE("default table has 19 rows with attention after bnecks 9 and 12") {
    auto cfg = default_backbone_config();
    CHECK(cfg.layers.size() == 19);
    Backbone net(cfg);
    CHECK((net->attention_rows() == std::vector<std::size_t>{11, 15}));
    CHECK((net->attention_after_bneck() == std::vector<int>{9, 12}));
    CHECK(cfg.layers.front().temporal_kernel == 1);
  }

  TEST_CASE("shape trace matches the table row for row") {
    Backbone net(default_backbone_config());
    CHECK(net->shape_trace() == kTableShapes);
    CHECK((net->output_shape() == Shape{960, 4, 7, 7}));
  }

  TEST_CASE("width multiplier rounds to multiples of 8 with floor 8") {
    CHECK(scale_channels(16, 0.25) == 8);
    CHECK(scale_channels(24, 0.25) == 8);
    CHECK(scale_channels(40, 0.25) == 8);
    CHECK(scale_channels(80, 0.25) == 24);  // 20 -> nearest multiple 24
    CHECK(scale_channels(112, 0.25) == 32);  // 28 -> 32 (tie rounds up)
    CHECK(scale_channels(960, 0.25) == 240);
    CHECK(scale_channels(960, 1.0) == 960);
  }

  TEST_CASE("desk variant builds and ends at 2x2x2") {
    Backbone net(desk_backbone_config());
    CHECK((net->output_shape() == Shape{240, 2, 2, 2}));
    auto out = net->forward(torch::randn({2, 3, 8, 64, 64}), RunMode::inference());
    CHECK((out.features.sizes() == torch::IntArrayRef{2, 240, 2, 2, 2}));
    CHECK(out.attention.size() == 2);
  }

  TEST_CASE("forward rejects wrong input shape naming both") {
    Backbone net(tiny_config());
    try {
      net->forward(torch::zeros({3, 5, 32, 32}), RunMode::inference());
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(3,4,32,32)") != std::string::npos);
      CHECK(msg.find("5") != std::string::npos);
    }
  }

  TEST_CASE("zero clip in inference is finite; inference ignores generator") {
    Backbone net(tiny_config());
    auto a = net->forward(torch::zeros({3, 4, 32, 32}), RunMode::inference()).features;
    CHECK(torch::isfinite(a).all().item<bool>());
    auto x = torch::randn({2, 3, 4, 32, 32});
    auto r1 = net->forward(x, RunMode::inference()).features;
    auto r2 = net->forward(x, RunMode::inference()).features;
    CHECK(torch::equal(r1, r2));
  }

  TEST_CASE("training mode is deterministic under a fixed seed") {
    Backbone net(tiny_config());
    auto x = torch::randn({2, 3, 4, 32, 32});
    auto a = net->forward(x, RunMode::train(make_generator(7))).features;
    auto b = net->forward(x, RunMode::train(make_generator(7))).features;
    auto c = net->forward(x, RunMode::train(make_generator(8))).features;
    CHECK(torch::equal(a, b));
    CHECK_FALSE(torch::equal(a, c));
  }

  TEST_CASE("invalid configs are rejected") {
    auto c = default_backbone_config();
    c.layers[2].spatial_stride = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = default_backbone_config();
    c.layers[1].spatial_kernel = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = default_backbone_config();
    c.layers[0].temporal_kernel = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = default_backbone_config();
    c.layers[1].expand_size.reset();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = default_backbone_config();
    c.width_multiplier = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("config document round-trips and rejects unknown columns") {
    const auto path = (std::filesystem::temp_directory_path() / "backbone_rt.json").string();
    save_backbone_config(default_backbone_config(), path);
    auto back = load_backbone_config(path);
    CHECK(to_json(back) == to_json(default_backbone_config()));
    auto doc = to_json(default_backbone_config());
    CHECK(doc["layers"][0].contains("Sp. kernel"));
    CHECK(doc["layers"][2]["Exp size"] == 64);
    doc["layers"][0]["Kernel"] = 3;
    CHECK_THROWS_AS(backbone_config_from_json(doc), ConfigError);
  }

  TEST_CASE("bneck from the table halves space and time") {
    const auto& row = default_backbone_config().layers[2];
    Bottleneck b(16, row, 1.0, 0.1);
    auto y = b->forward(torch::randn({1, 16, 16, 28, 28}), RunMode::inference());
    CHECK((y.sizes() == torch::IntArrayRef{1, 24, 8, 14, 14}));
    Cost cost;
    CHECK((b->trace({16, 16, 112, 112}, cost) == Shape{24, 8, 56, 56}));
  }

  TEST_CASE("residual bneck with zeroed projection is the identity") {
    const auto& row = default_backbone_config().layers[3];  // 24 -> 24, strides 1
    Bottleneck b(24, row, 1.0, 0.1);
    REQUIRE(b->has_residual());
    {
      torch::NoGradGuard g;
      b->project()->conv()->weight.zero_();
      b->project_bn()->weight.zero_();
      b->project_bn()->bias.zero_();
    }
    auto x = torch::randn({1, 24, 4, 8, 8});
    CHECK(torch::allclose(b->forward(x, RunMode::inference()), x));
    // dropout noise multiplies a zero branch, so training mode is the identity too
    CHECK(torch::allclose(b->forward(x, RunMode::train(make_generator(1))), x));
  }

  TEST_CASE("bneck rejects channel mismatch") {
    const auto& row = default_backbone_config().layers[3];
    Bottleneck b(24, row, 1.0, 0.1);
    CHECK_THROWS(b->forward(torch::randn({1, 16, 4, 8, 8}), RunMode::inference()));
  }

  TEST_CASE("temporal average pool") {
    auto x = torch::arange(16, torch::kFloat).view({1, 1, 16, 1, 1}).expand({1, 2, 16, 3, 3}).contiguous();
    auto y = temporal_avg_pool(x, 2, 2);
    CHECK(y.size(2) == 8);
    for (int t = 0; t < 8; ++t) CHECK(y[0][1][t][2][0].item<float>() == doctest::Approx(2 * t + 0.5));
    auto r = torch::randn({2, 3, 4, 5, 5});
    CHECK(torch::equal(temporal_avg_pool(r, 1, 1), r));
    auto p = temporal_avg_pool(r, 2, 2);
    for (int t = 0; t < 2; ++t) {
      auto want = (r.select(2, 2 * t) + r.select(2, 2 * t + 1)) / 2;
      CHECK(torch::allclose(p.select(2, t), want, 1e-6, 1e-7));
    }
    CHECK_THROWS_AS(temporal_avg_pool(torch::randn({1, 1, 1, 2, 2}), 2, 2), ShapeError);
    // unbatched form
    CHECK((temporal_avg_pool(torch::randn({3, 4, 2, 2}), 2, 2).sizes() == torch::IntArrayRef{3, 2, 2, 2}));
  }

  TEST_CASE("SE squeeze is per frame") {
    auto x = torch::zeros({1, 8, 3, 4, 4});
    for (int t = 0; t < 3; ++t) x.select(2, t).fill_(t + 1.0);
    auto s = spatial_squeeze(x);
    CHECK((s.sizes() == torch::IntArrayRef{1, 8, 3, 1, 1}));
    for (int t = 0; t < 3; ++t) CHECK(s[0][0][t][0][0].item<float>() == t + 1.0f);

    SqueezeExcite se(8);
    auto g = se->gate(s);
    // an oracle pooling over T as well yields one gate for all frames; ours differs per frame
    CHECK_FALSE(torch::allclose(g.select(2, 0), g.select(2, 2)));
    auto perm = torch::tensor({2, 0, 1});
    auto sp = spatial_squeeze(x.index_select(2, perm));
    CHECK(torch::equal(sp, s.index_select(2, perm)));
  }

  TEST_CASE("SE gate saturating at one passes input through") {
    SqueezeExcite se(8);
    {
      torch::NoGradGuard g;
      se->fc2()->conv()->weight.zero_();
      se->fc2()->conv()->bias.fill_(100.0);
    }
    auto x = torch::randn({1, 8, 2, 4, 4});
    CHECK(torch::allclose(se->forward(x), x));
  }

  TEST_CASE("continuous dropout") {
    auto x = torch::randn({100});
    DropoutSpec spec;
    CHECK(torch::equal(continuous_dropout(x, spec, RunMode::inference()), x));
    DropoutSpec zero{0.0};
    CHECK(torch::equal(continuous_dropout(x, zero, RunMode::train(make_generator(0))), x));
    auto ones = torch::ones({100000}, torch::kDouble);
    auto n = continuous_dropout(ones, spec, RunMode::train(make_generator(3)));
    CHECK(n.mean().item<double>() == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::abs(n.var().item<double>() - 0.1 / 0.9) < 0.01);
  }

  TEST_CASE("activations") {
    auto x = torch::tensor({-4.0, -3.0, 0.0, 1.5, 3.0, 5.0});
    auto hs = hswish(x);
    auto want = torch::tensor({0.0, 0.0, 0.0, 1.5 * 4.5 / 6, 3.0, 5.0});
    CHECK(torch::allclose(hs, want));
    CHECK((torch::allclose(hsigmoid(x), torch::tensor({0.0, 0.0, 0.5, 0.75, 1.0, 1.0}))));
  }

  TEST_CASE("model stats") {
    ConvGeometry g;
    g.in_channels = 2;
    g.out_channels = 3;
    g.bias = true;
    Conv3dUnit conv(g);
    Cost cost;
    conv->trace({2, 1, 1, 1}, cost);
    int64_t params = 0;
    for (auto& p : conv->parameters()) params += p.numel();
    CHECK(params == 9);
    CHECK(2 * cost.macs == 12);

    Backbone net(default_backbone_config());
    auto stats = model_stats(*net);
    CHECK(stats.params >= 3'900'000);
    CHECK(stats.params <= 4'400'000);
    CHECK(stats.flops >= 6'000'000'000LL);
    CHECK(stats.flops <= 7'300'000'000LL);
  }

  TEST_CASE("traced cost matches a count over conv modules") {
    Backbone net(tiny_config());
    int64_t params = 0;
    for (auto& p : net->parameters()) params += p.numel();
    CHECK(model_stats(*net).params == params);
  }
}
