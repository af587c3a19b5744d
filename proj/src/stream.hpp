#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace bci {

// Sample-stream wire format, little-endian over a reliable byte stream:
//   u8 type (0 = data, 1 = marker); u64 first_sample_index;
//   data frames:   u16 channels, u16 n_samples, then channels*n_samples f32,
//                  channel-major
//   marker frames: u8 class label (cue onset)
struct Frame {
  enum class Type : uint8_t { data = 0, marker = 1 };
  Type type = Type::data;
  uint64_t first_sample_index = 0;
  uint16_t channels = 0;
  uint16_t n_samples = 0;
  std::vector<float> samples;  // channel-major, data frames only
  uint8_t label = 0;           // marker frames only

  static Frame data_frame(uint64_t first_index, uint16_t channels, std::vector<float> samples);
  static Frame marker(uint64_t sample_index, uint8_t label);
};

void encode_frame(const Frame& f, std::vector<uint8_t>& out);

// Incremental decoder for the wire format; feed bytes as they arrive and poll
// for complete frames. Unknown frame types are a data error.
class FrameParser {
 public:
  void feed(const uint8_t* bytes, size_t n);
  std::optional<Frame> next();

 private:
  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
};

// Pull interface consumed by the session loop; nullopt ends the stream.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<Frame> next() = 0;
};

struct ReplayTiming {
  double cue_s = 2.0;
  double imagery_s = 2.0;
  double decode_s = 2.0;
  double feedback_s = 3.0;
  double rest_s = 10.0;
  int rest_every = 20;
  int chunk_samples = 100;
};

// Replays dataset trials as one continuous session timeline. A seeded uniform
// shuffle fixes the trial order (cue label = trial label); each trial emits a
// marker at cue onset and data frames covering the whole trial span, zeros
// everywhere except the trial record, which is placed so that it ends exactly
// at imagery onset + imagery length.
class ReplayFrameSource : public FrameSource {
 public:
  ReplayFrameSource(const Dataset& ds, int n_trials, uint64_t seed, ReplayTiming timing = {});

  std::optional<Frame> next() override;
  const std::vector<int>& trial_order() const { return order_; }

 private:
  const Dataset* ds_;
  ReplayTiming timing_;
  std::vector<int> order_;
  int trial_ = 0;            // next trial to emit
  bool marker_sent_ = false;
  uint64_t pos_ = 0;         // next sample index to stream
  uint64_t trial_start_ = 0; // cue onset of current trial
};

// Client side of the wire protocol; connects and pulls frames off the socket.
class TcpFrameSource : public FrameSource {
 public:
  TcpFrameSource(const std::string& host, uint16_t port);
  ~TcpFrameSource() override;
  TcpFrameSource(const TcpFrameSource&) = delete;
  TcpFrameSource& operator=(const TcpFrameSource&) = delete;

  std::optional<Frame> next() override;

 private:
  int fd_ = -1;
  FrameParser parser_;
  bool eof_ = false;
};

// Minimal loopback producer for tests and tooling: binds (port 0 picks an
// ephemeral port), accepts one client, streams every frame, closes.
class FrameServer {
 public:
  explicit FrameServer(uint16_t port);
  ~FrameServer();
  FrameServer(const FrameServer&) = delete;
  FrameServer& operator=(const FrameServer&) = delete;

  uint16_t port() const { return port_; }
  void serve_once(FrameSource& source);

 private:
  int listen_fd_ = -1;
  uint16_t port_ = 0;
};

}  // namespace bci
