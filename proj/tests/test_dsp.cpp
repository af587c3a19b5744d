#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "dsp.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "test_util.hpp"

using namespace bci;
using namespace bci::dsp;

namespace {

double magnitude(const BiquadCascade& c, double f, double fs) {
  return std::pow(10.0, frequency_response_db(c, f, fs) / 20.0);
}

std::vector<double> sine(double freq, double fs, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * 3.14159265358979323846 * freq * i / fs);
  return x;
}

}  // namespace

TEST_CASE("butterworth order 5 structure and DC gain") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  CHECK(lp.sections().size() == 3);  // two biquads + one degenerate first-order
  CHECK(lp.sections().back().b2 == 0.0);
  CHECK(lp.sections().back().a2 == 0.0);
  CHECK(std::fabs(magnitude(lp, 0.0, 500.0) - 1.0) < 1e-9);
  CHECK_THROWS_AS(design_butterworth_lowpass(5, 250.0, 500.0), Error);
  CHECK_THROWS_AS(design_butterworth_lowpass(5, 0.0, 500.0), Error);
}

TEST_CASE("butterworth -3 dB at cutoff") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  CHECK(frequency_response_db(lp, 120.0, 500.0) == doctest::Approx(-3.0103).epsilon(0.033));
  CHECK(std::fabs(frequency_response_db(lp, 120.0, 500.0) + 3.0103) < 0.1);
}

TEST_CASE("butterworth magnitude is monotone non-increasing") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  double prev = frequency_response_db(lp, 0.0, 500.0);
  for (int f = 1; f < 250; ++f) {
    const double cur = frequency_response_db(lp, static_cast<double>(f), 500.0);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("designed cascades are stable") {
  CHECK(design_butterworth_lowpass(5, 120.0, 500.0).stable(1e-9));
  CHECK(design_butterworth_lowpass(4, 40.0, 250.0).stable(1e-9));
  CHECK(design_notch(60.0, 30.0, 500.0).stable(1e-9));
}

TEST_CASE("notch endpoints and depth") {
  BiquadCascade nt = design_notch(60.0, 30.0, 500.0);
  CHECK(std::fabs(magnitude(nt, 0.0, 500.0) - 1.0) < 1e-6);
  CHECK(std::fabs(magnitude(nt, 249.999, 500.0) - 1.0) < 1e-3);
  CHECK(frequency_response_db(nt, 60.0, 500.0) <= -40.0);
  CHECK_THROWS_AS(design_notch(250.0, 30.0, 500.0), Error);
}

TEST_CASE("notch is the global minimum on a 0.1 Hz grid") {
  BiquadCascade nt = design_notch(60.0, 30.0, 500.0);
  double best_f = -1.0, best_db = 1e9;
  for (int i = 1; i < 2500; ++i) {
    const double f = 0.1 * i;
    const double db = frequency_response_db(nt, f, 500.0);
    if (db < best_db) {
      best_db = db;
      best_f = f;
    }
  }
  CHECK(best_f == doctest::Approx(60.0).epsilon(1e-9));
}

TEST_CASE("notch attenuates a steady 60 Hz sine by 40 dB") {
  const double fs = 500.0;
  const int n = static_cast<int>(10 * fs);
  std::vector<double> x = sine(60.0, fs, n);
  BiquadCascade nt = design_notch(60.0, 30.0, fs);
  nt.init_state(1);
  nt.process(x.data(), 1, n);
  double rms = 0.0;
  const int skip = static_cast<int>(fs);  // discard the first second
  for (int i = skip; i < n; ++i) rms += x[i] * x[i];
  rms = std::sqrt(rms / (n - skip));
  const double in_rms = 1.0 / std::sqrt(2.0);
  CHECK(20.0 * std::log10(in_rms / rms) >= 40.0);
}

TEST_CASE("identity cascade passes input through bitwise") {
  BiquadCascade id({Biquad{}});
  Rng rng(5);
  std::vector<double> x = testutil::random_vec(200, rng);
  std::vector<double> y = x;
  id.init_state(2);
  id.process(y.data(), 2, 100);
  CHECK(y == x);
  CHECK(frequency_response_db(id, 37.5, 500.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("streaming equals batch filtering for any chunking") {
  const int channels = 3;
  const int n = 5000;
  Rng rng(11);
  std::vector<double> signal = testutil::random_vec(static_cast<size_t>(channels) * n, rng);

  BiquadCascade batch = design_butterworth_lowpass(5, 120.0, 500.0);
  std::vector<double> whole = signal;
  batch.init_state(channels);
  batch.process(whole.data(), channels, n);

  auto run_chunked = [&](const std::vector<int>& chunks) {
    BiquadCascade stream = design_butterworth_lowpass(5, 120.0, 500.0);
    stream.init_state(channels);
    std::vector<double> out(signal.size());
    int done = 0;
    for (int len : chunks) {
      // gather a channel-major chunk, filter, scatter back
      std::vector<double> chunk(static_cast<size_t>(channels) * len);
      for (int c = 0; c < channels; ++c) {
        std::copy(signal.begin() + static_cast<size_t>(c) * n + done,
                  signal.begin() + static_cast<size_t>(c) * n + done + len,
                  chunk.begin() + static_cast<size_t>(c) * len);
      }
      stream.process(chunk.data(), channels, len);
      for (int c = 0; c < channels; ++c) {
        std::copy(chunk.begin() + static_cast<size_t>(c) * len,
                  chunk.begin() + static_cast<size_t>(c + 1) * len,
                  out.begin() + static_cast<size_t>(c) * n + done);
      }
      done += len;
    }
    REQUIRE(done == n);
    return out;
  };

  SUBCASE("fixed sizes 1, 7, 500") {
    for (int size : {1, 7, 500}) {
      std::vector<int> chunks;
      int left = n;
      while (left > 0) {
        chunks.push_back(std::min(size, left));
        left -= std::min(size, left);
      }
      CHECK(run_chunked(chunks) == whole);
    }
  }
  SUBCASE("random partitions") {
    Rng part_rng(23);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<int> chunks;
      int left = n;
      while (left > 0) {
        const int take = 1 + static_cast<int>(part_rng.below(static_cast<uint64_t>(
                                 std::min(left, 900))));
        chunks.push_back(take);
        left -= take;
      }
      CHECK(run_chunked(chunks) == whole);
    }
  }
}

TEST_CASE("low-pass converges to DC value") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  lp.init_state(1);
  std::vector<double> x(1000, 2.5);
  lp.process(x.data(), 1, 1000);
  CHECK(std::fabs(x.back() - 2.5) < 1e-6);
}

TEST_CASE("filter rejects mismatched channel counts") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  lp.init_state(4);
  std::vector<double> x(8, 0.0);
  CHECK_THROWS_AS(lp.process(x.data(), 2, 4), Error);
}

TEST_CASE("frequency response rejects out-of-range frequencies") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  CHECK_THROWS_AS(frequency_response_db(lp, 250.0, 500.0), Error);
  CHECK_THROWS_AS(frequency_response_db(lp, -1.0, 500.0), Error);
}

TEST_CASE("coefficient table round-trips at 17 significant digits") {
  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  std::istringstream in(lp.coefficient_table());
  std::string header;
  std::getline(in, header);
  CHECK(header == "section,b0,b1,b2,a1,a2");
  for (const Biquad& s : lp.sections()) {
    std::string line;
    REQUIRE(std::getline(in, line));
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream fields(line);
    int idx;
    double b0, b1, b2, a1, a2;
    fields >> idx >> b0 >> b1 >> b2 >> a1 >> a2;
    CHECK(b0 == s.b0);
    CHECK(b1 == s.b1);
    CHECK(b2 == s.b2);
    CHECK(a1 == s.a1);
    CHECK(a2 == s.a2);
  }
}

TEST_CASE("common average reference") {
  SUBCASE("single channel becomes zero") {
    std::vector<double> x = {1.0, -2.0, 3.0};
    common_average_reference(x.data(), 1, 3);
    for (double v : x) CHECK(v == 0.0);
  }
  SUBCASE("channel mean is zero and constant shifts vanish") {
    Rng rng(7);
    const int c = 8, n = 100;
    std::vector<double> x = testutil::random_vec(static_cast<size_t>(c) * n, rng);
    std::vector<double> shifted = x;
    for (double& v : shifted) v += 42.0;
    common_average_reference(x.data(), c, n);
    common_average_reference(shifted.data(), c, n);
    for (int i = 0; i < n; ++i) {
      double mean = 0.0;
      for (int ch = 0; ch < c; ++ch) mean += x[static_cast<size_t>(ch) * n + i];
      CHECK(std::fabs(mean / c) < 1e-12);
    }
    for (size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(x[i] - shifted[i]) < 1e-12);
  }
}

TEST_CASE("baseline correction") {
  auto make_epoch = [](int channels, int samples, int onset) {
    EegEpoch e;
    e.channels = channels;
    e.samples = samples;
    e.fs = 500.0;
    e.onset_index = onset;
    e.data.assign(static_cast<size_t>(channels) * samples, 0.0);
    return e;
  };
  SUBCASE("constant epoch becomes zero") {
    EegEpoch e = make_epoch(2, 50, 10);
    std::fill(e.data.begin(), e.data.end(), 7.5);
    baseline_correct(e, 10);
    for (double v : e.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("baseline window mean becomes zero") {
    Rng rng(9);
    EegEpoch e = make_epoch(4, 200, 50);
    e.data = testutil::random_vec(e.data.size(), rng);
    baseline_correct(e, 50);
    for (int c = 0; c < 4; ++c) {
      double mean = 0.0;
      for (int i = 0; i < 50; ++i) mean += e.channel(c)[i];
      CHECK(std::fabs(mean / 50) < 1e-12);
    }
  }
  SUBCASE("0.2 s at 500 Hz is 100 samples") {
    CHECK(static_cast<int>(std::lround(0.2 * 500.0)) == 100);
  }
  SUBCASE("insufficient pre-onset samples") {
    EegEpoch e = make_epoch(1, 50, 5);
    CHECK_THROWS_AS(baseline_correct(e, 10), Error);
  }
}

TEST_CASE("epoch extraction") {
  const int channels = 2;
  const int64_t len = 2000;
  Rng rng(13);
  std::vector<double> buffer = testutil::random_vec(static_cast<size_t>(channels) * len, rng);
  SUBCASE("window geometry at 500 Hz") {
    EegEpoch e = epoch_extract(buffer.data(), channels, len, 500, 0.2, 2.0, 500.0);
    CHECK(e.samples == 1100);
    CHECK(e.onset_index == 100);
    CHECK(e.channel(0)[100] == buffer[500]);  // imagery start aligns with onset
  }
  SUBCASE("onset at buffer start fails") {
    CHECK_THROWS_AS(epoch_extract(buffer.data(), channels, len, 0, 0.2, 2.0, 500.0), Error);
    CHECK_THROWS_AS(epoch_extract(buffer.data(), channels, len, 1500, 0.2, 2.0, 500.0), Error);
  }
  SUBCASE("extraction is deterministic") {
    EegEpoch a = epoch_extract(buffer.data(), channels, len, 500, 0.2, 2.0, 500.0);
    EegEpoch b = epoch_extract(buffer.data(), channels, len, 500, 0.2, 2.0, 500.0);
    CHECK(a.data == b.data);
  }
}

TEST_CASE("re-centering stages are idempotent") {
  Rng rng(21);
  const int channels = 8, samples = 1100, baseline = 100;
  EegEpoch e;
  e.channels = channels;
  e.samples = samples;
  e.fs = 500.0;
  e.onset_index = baseline;
  e.data = testutil::random_vec(static_cast<size_t>(channels) * samples, rng);

  BiquadCascade lp = design_butterworth_lowpass(5, 120.0, 500.0);
  BiquadCascade nt = design_notch(60.0, 30.0, 500.0);
  lp.init_state(channels);
  nt.init_state(channels);
  lp.process(e.data.data(), channels, samples);
  nt.process(e.data.data(), channels, samples);
  baseline_correct(e, baseline);
  common_average_reference(e.data.data(), channels, samples);

  EegEpoch again = e;
  baseline_correct(again, baseline);
  common_average_reference(again.data.data(), channels, samples);
  for (size_t i = 0; i < e.data.size(); ++i) {
    CHECK(std::fabs(again.data[i] - e.data[i]) < 1e-9);
  }
}
