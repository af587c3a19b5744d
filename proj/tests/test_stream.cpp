#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <thread>

#include "doctest.h"
#include "errors.hpp"
#include "stream.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace bci;

namespace {

SynthConfig tiny_synth() {
  SynthConfig c;
  c.channels = 4;
  c.fs = 100.0;
  c.n_classes = 2;
  c.trials_per_class = 3;
  c.signatures = {{{9.0, 0, 2, 10.0}}, {}};
  c.seed = 3;
  return c;
}

std::vector<Frame> drain(FrameSource& src) {
  std::vector<Frame> frames;
  while (auto f = src.next()) frames.push_back(std::move(*f));
  return frames;
}

bool frames_equal(const Frame& a, const Frame& b) {
  if (a.type != b.type || a.first_sample_index != b.first_sample_index) return false;
  if (a.type == Frame::Type::marker) return a.label == b.label;
  return a.channels == b.channels && a.n_samples == b.n_samples && a.samples == b.samples;
}

}  // namespace

TEST_CASE("frame codec round-trips through arbitrary fragmentation") {
  Rng rng(5);
  std::vector<Frame> frames;
  uint64_t pos = 0;
  for (int i = 0; i < 40; ++i) {
    if (rng.below(4) == 0) {
      frames.push_back(Frame::marker(pos, static_cast<uint8_t>(rng.below(4))));
    } else {
      const uint16_t channels = static_cast<uint16_t>(1 + rng.below(5));
      const uint16_t n = static_cast<uint16_t>(1 + rng.below(50));
      std::vector<float> samples(static_cast<size_t>(channels) * n);
      for (float& v : samples) v = static_cast<float>(rng.normal());
      frames.push_back(Frame::data_frame(pos, channels, std::move(samples)));
      pos += n;
    }
  }
  std::vector<uint8_t> wire;
  for (const Frame& f : frames) encode_frame(f, wire);

  FrameParser parser;
  std::vector<Frame> decoded;
  size_t fed = 0;
  while (fed < wire.size()) {
    const size_t take = std::min<size_t>(1 + rng.below(97), wire.size() - fed);
    parser.feed(wire.data() + fed, take);
    fed += take;
    while (auto f = parser.next()) decoded.push_back(std::move(*f));
  }
  REQUIRE(decoded.size() == frames.size());
  for (size_t i = 0; i < frames.size(); ++i) CHECK(frames_equal(decoded[i], frames[i]));
}

TEST_CASE("parser waits on truncated frames and rejects unknown types") {
  Frame f = Frame::data_frame(7, 2, std::vector<float>(20, 1.0f));
  std::vector<uint8_t> wire;
  encode_frame(f, wire);
  FrameParser parser;
  parser.feed(wire.data(), wire.size() - 1);
  CHECK(!parser.next().has_value());
  parser.feed(wire.data() + wire.size() - 1, 1);
  CHECK(parser.next().has_value());

  std::vector<uint8_t> junk = {9, 0, 0, 0, 0, 0, 0, 0, 0};
  FrameParser bad;
  bad.feed(junk.data(), junk.size());
  CHECK_THROWS_AS(bad.next(), Error);
}

TEST_CASE("replay stream places each record exactly before its decode point") {
  SynthConfig sc = tiny_synth();
  Dataset ds = generate_dataset(sc);
  ReplayTiming timing;
  timing.chunk_samples = 17;  // awkward on purpose
  ReplayFrameSource replay(ds, 6, 99, timing);
  const std::vector<int> order = replay.trial_order();
  CHECK(order.size() == 6);

  std::vector<Frame> frames = drain(replay);
  // gather markers and flatten the data stream
  std::vector<Frame> markers;
  std::vector<std::vector<float>> flat(static_cast<size_t>(ds.channels));
  uint64_t expect = 0;
  for (const Frame& f : frames) {
    if (f.type == Frame::Type::marker) {
      markers.push_back(f);
      continue;
    }
    CHECK(f.first_sample_index == expect);
    for (int c = 0; c < ds.channels; ++c) {
      flat[static_cast<size_t>(c)].insert(flat[static_cast<size_t>(c)].end(),
                                          f.samples.begin() + static_cast<size_t>(c) * f.n_samples,
                                          f.samples.begin() + static_cast<size_t>(c + 1) * f.n_samples);
    }
    expect += f.n_samples;
  }
  REQUIRE(markers.size() == 6);
  const int64_t cue_n = 200;  // 2 s at 100 Hz
  for (size_t t = 0; t < markers.size(); ++t) {
    const EegEpoch& trial = ds.trials[static_cast<size_t>(order[t])];
    CHECK(markers[t].label == static_cast<uint8_t>(trial.label));
    const int64_t imagery_onset = static_cast<int64_t>(markers[t].first_sample_index) + cue_n;
    const int64_t record_begin = imagery_onset - trial.onset_index;
    for (int c = 0; c < ds.channels; ++c) {
      for (int i = 0; i < trial.samples; ++i) {
        CHECK(flat[static_cast<size_t>(c)][static_cast<size_t>(record_begin + i)] ==
              static_cast<float>(trial.channel(c)[i]));
      }
      // zero filler directly before the record
      if (record_begin > 0) {
        CHECK(flat[static_cast<size_t>(c)][static_cast<size_t>(record_begin - 1)] == 0.0f);
      }
    }
  }
}

TEST_CASE("replay order is a seeded shuffle and respects n_trials") {
  SynthConfig sc = tiny_synth();
  Dataset ds = generate_dataset(sc);
  ReplayFrameSource a(ds, 6, 1), b(ds, 6, 1), c(ds, 6, 2);
  CHECK(a.trial_order() == b.trial_order());
  CHECK(a.trial_order() != c.trial_order());
  ReplayFrameSource partial(ds, 2, 1);
  CHECK(partial.trial_order().size() == 2);
  CHECK_THROWS_AS(ReplayFrameSource(ds, 7, 1), Error);
  CHECK_THROWS_AS(ReplayFrameSource(ds, 0, 1), Error);
}

TEST_CASE("replay inserts a rest gap after each block") {
  SynthConfig sc = tiny_synth();
  Dataset ds = generate_dataset(sc);
  ReplayTiming timing;
  timing.rest_every = 2;
  timing.rest_s = 1.0;
  ReplayFrameSource replay(ds, 4, 7, timing);
  std::vector<Frame> frames = drain(replay);
  std::vector<uint64_t> marker_at;
  for (const Frame& f : frames) {
    if (f.type == Frame::Type::marker) marker_at.push_back(f.first_sample_index);
  }
  REQUIRE(marker_at.size() == 4);
  const uint64_t span = 900;  // (2+2+2+3) s at 100 Hz
  CHECK(marker_at[1] - marker_at[0] == span);
  CHECK(marker_at[2] - marker_at[1] == span + 100);  // rest after trial 2
  CHECK(marker_at[3] - marker_at[2] == span);
}

TEST_CASE("tcp source delivers the same frames as direct replay") {
  SynthConfig sc = tiny_synth();
  sc.trials_per_class = 1;
  Dataset ds = generate_dataset(sc);
  ReplayFrameSource direct(ds, 2, 5);
  std::vector<Frame> expected = drain(direct);

  FrameServer server(0);
  std::thread producer([&] {
    ReplayFrameSource replay(ds, 2, 5);
    server.serve_once(replay);
  });
  std::vector<Frame> received;
  {
    TcpFrameSource client("127.0.0.1", server.port());
    received = drain(client);
  }
  producer.join();
  REQUIRE(received.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) CHECK(frames_equal(received[i], expected[i]));
}

TEST_CASE("tcp source rejects unreachable endpoints") {
  CHECK_THROWS_AS(TcpFrameSource("127.0.0.1", 1), Error);
}
