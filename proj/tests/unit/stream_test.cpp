#include "test_prelude.hpp"

#include "fixtures.hpp"
#include "gesture/error.hpp"
#include "gesture/stream.hpp"

using namespace gesture;

namespace {

struct Served {
  GestureNet model;
  torch::Tensor centers;
};

Served serve(int classes = 4) {
  auto s = make_train_state(fixture::tiny_backbone(), fixture::short_schedule(),
                            std::vector<std::string>(classes, "c"));
  s.model->eval();
  return {s.model, s.centers};
}

torch::Tensor frame(uint64_t seed) {
  auto g = make_generator(seed);
  return torch::rand({48, 48, 3}, g);
}

const Box kBox{4, 4, 40, 40};

}  // namespace

TEST_SUITE("stream_infer") {
  TEST_CASE("window fills before the first prediction") {
    auto m = serve();
    StreamRecognizer rec(m.model, m.centers, {});
    REQUIRE(rec.window() == 4);
    for (int i = 0; i < 3; ++i) CHECK(rec.push_frame(frame(i), kBox).status == StreamRecognizer::Status::kNotReady);
    auto r = rec.push_frame(frame(3), kBox);
    CHECK(r.status == StreamRecognizer::Status::kPrediction);
    REQUIRE(r.prediction);
    CHECK(r.prediction->scores.size(0) == 4);
    // one prediction per further push at stride 1
    for (int i = 4; i < 8; ++i) CHECK(rec.push_frame(frame(i), kBox).status == StreamRecognizer::Status::kPrediction);
  }

  TEST_CASE("stride skips pushes once warm") {
    auto m = serve();
    StreamRecognizer rec(m.model, m.centers, {}, {0.5, 2});
    for (int i = 0; i < 3; ++i) rec.push_frame(frame(i), kBox);
    std::vector<StreamRecognizer::Status> seen;
    for (int i = 3; i < 7; ++i) seen.push_back(rec.push_frame(frame(i), kBox).status);
    using S = StreamRecognizer::Status;
    CHECK((seen == std::vector<S>{S::kPrediction, S::kSkipped, S::kPrediction, S::kSkipped}));
    CHECK_THROWS_AS(StreamRecognizer(m.model, m.centers, {}, {0.5, 0}), ConfigError);
  }

  TEST_CASE("threshold above every score yields no class but keeps scores") {
    auto m = serve();
    StreamRecognizer rec(m.model, m.centers, {}, {1.01, 1});
    StreamRecognizer::PushResult r;
    for (int i = 0; i < 4; ++i) r = rec.push_frame(frame(i), kBox);
    REQUIRE(r.prediction);
    CHECK_FALSE(r.prediction->class_id.has_value());
    CHECK(r.prediction->scores.defined());
    CHECK(r.prediction->confidence == doctest::Approx(r.prediction->scores.max().item<double>()));
  }

  TEST_CASE("raising the threshold never turns a none into a class") {
    auto m = serve();
    std::vector<bool> emitted;
    for (double th : {-1.0, -0.2, 0.0, 0.1, 0.3, 0.6, 1.0}) {
      StreamRecognizer rec(m.model, m.centers, {}, {th, 1});
      StreamRecognizer::PushResult r;
      for (int i = 0; i < 4; ++i) r = rec.push_frame(frame(i), kBox);
      emitted.push_back(r.prediction->class_id.has_value());
    }
    for (std::size_t i = 1; i < emitted.size(); ++i) CHECK((emitted[i - 1] || !emitted[i]));
    CHECK(emitted.front());
  }

  TEST_CASE("invalid box is rejected and the buffer is unchanged") {
    auto m = serve();
    StreamRecognizer rec(m.model, m.centers, {});
    rec.push_frame(frame(0), kBox);
    rec.push_frame(frame(1), kBox);
    for (const Box& bad : {Box{10, 10, 10, 20}, Box{-1, 0, 10, 10}, Box{0, 0, 49, 10}, Box{20, 20, 10, 30}}) {
      CHECK(rec.push_frame(frame(9), bad).status == StreamRecognizer::Status::kRejected);
      CHECK(rec.buffered() == 2);
    }
    CHECK_THROWS_AS(rec.push_frame(torch::zeros({48, 48}), kBox), ShapeError);
  }

  TEST_CASE("prediction depends only on the last window of frames") {
    auto m = serve();
    StreamRecognizer a(m.model, m.centers, {});
    StreamRecognizer b(m.model, m.centers, {});
    StreamRecognizer::PushResult ra, rb;
    for (int i = 0; i < 11; ++i) ra = a.push_frame(frame(i), kBox);
    for (int i = 7; i < 11; ++i) rb = b.push_frame(frame(i), kBox);
    CHECK(torch::equal(ra.prediction->scores, rb.prediction->scores));
    a.reset();
    CHECK(a.buffered() == 0);
  }

  TEST_CASE("clip scores are bounded cosines and deterministic") {
    auto m = serve(6);
    auto g = make_generator(5);
    auto clips = torch::randn({8, 3, 4, 48, 48}, g);
    auto s = predict_clip(*m.model, m.centers, clips);
    CHECK((s.sizes() == torch::IntArrayRef{8, 6}));
    CHECK(s.abs().max().item<double>() <= 1.0 + 1e-5);
    CHECK(torch::equal(s, predict_clip(*m.model, m.centers, clips)));
    auto one = predict_clip(*m.model, m.centers, clips[2]);
    CHECK(torch::allclose(one, s[2], 1e-5, 1e-6));
  }

  TEST_CASE("a center equal to the clip embedding scores one") {
    auto m = serve(3);
    auto clip = torch::randn({3, 4, 48, 48});
    torch::Tensor e;
    {
      torch::NoGradGuard ng;
      e = m.model->forward(clip, RunMode::inference()).embedding;
    }
    auto centers = m.centers.clone();
    centers[1] = e;
    auto s = predict_clip(*m.model, centers, clip);
    CHECK(s[1].item<double>() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s.argmax().item<int64_t>() == 1);
  }
}
