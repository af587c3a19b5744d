#include "stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>

#include "binio.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace bci {

Frame Frame::data_frame(uint64_t first_index, uint16_t channels, std::vector<float> samples) {
  if (channels == 0 || samples.size() % channels != 0) {
    fail_usage("Frame: sample count must be a multiple of channels");
  }
  Frame f;
  f.type = Type::data;
  f.first_sample_index = first_index;
  f.channels = channels;
  f.n_samples = static_cast<uint16_t>(samples.size() / channels);
  f.samples = std::move(samples);
  return f;
}

Frame Frame::marker(uint64_t sample_index, uint8_t label) {
  Frame f;
  f.type = Type::marker;
  f.first_sample_index = sample_index;
  f.label = label;
  return f;
}

void encode_frame(const Frame& f, std::vector<uint8_t>& out) {
  binio::put_u8(out, static_cast<uint8_t>(f.type));
  binio::put_u64(out, f.first_sample_index);
  if (f.type == Frame::Type::data) {
    if (f.samples.size() != static_cast<size_t>(f.channels) * f.n_samples) {
      fail_usage("encode_frame: sample buffer does not match header");
    }
    binio::put_u16(out, f.channels);
    binio::put_u16(out, f.n_samples);
    for (float v : f.samples) binio::put_f32(out, v);
  } else {
    binio::put_u8(out, f.label);
  }
}

void FrameParser::feed(const uint8_t* bytes, size_t n) {
  // compact the consumed prefix before appending
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  } else if (pos_ > 4096) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(pos_));
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes, bytes + n);
}

std::optional<Frame> FrameParser::next() {
  binio::Reader r{buf_.data(), buf_.size(), pos_};
  uint8_t type = 0;
  uint64_t index = 0;
  if (!r.get_u8(type) || !r.get_u64(index)) return std::nullopt;
  if (type == static_cast<uint8_t>(Frame::Type::data)) {
    uint16_t channels = 0, n_samples = 0;
    if (!r.get_u16(channels) || !r.get_u16(n_samples)) return std::nullopt;
    if (channels == 0) fail_data("frame stream: data frame with zero channels");
    const size_t count = static_cast<size_t>(channels) * n_samples;
    if (r.remaining() < count * 4) return std::nullopt;
    Frame f;
    f.type = Frame::Type::data;
    f.first_sample_index = index;
    f.channels = channels;
    f.n_samples = n_samples;
    f.samples.resize(count);
    for (float& v : f.samples) r.get_f32(v);
    pos_ = r.pos;
    return f;
  }
  if (type == static_cast<uint8_t>(Frame::Type::marker)) {
    uint8_t label = 0;
    if (!r.get_u8(label)) return std::nullopt;
    pos_ = r.pos;
    return Frame::marker(index, label);
  }
  fail_data("frame stream: unknown frame type " + std::to_string(type));
}

ReplayFrameSource::ReplayFrameSource(const Dataset& ds, int n_trials, uint64_t seed,
                                     ReplayTiming timing)
    : ds_(&ds), timing_(timing) {
  if (n_trials < 1) fail_usage("replay: n_trials must be positive");
  if (n_trials > static_cast<int>(ds.trials.size())) {
    fail_data("replay: source file has only " + std::to_string(ds.trials.size()) + " trials");
  }
  order_.resize(ds.trials.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  Rng rng = Rng(seed).stream(0x0DDE);
  rng.shuffle(order_);
  order_.resize(static_cast<size_t>(n_trials));
}

std::optional<Frame> ReplayFrameSource::next() {
  if (trial_ >= static_cast<int>(order_.size())) return std::nullopt;
  const Dataset& ds = *ds_;
  const double fs = ds.fs;
  auto samples_of = [&](double s) { return static_cast<int64_t>(std::llround(s * fs)); };
  const int64_t cue_len = samples_of(timing_.cue_s);
  const int64_t trial_span = cue_len + samples_of(timing_.imagery_s) +
                             samples_of(timing_.decode_s) + samples_of(timing_.feedback_s);

  if (!marker_sent_) {
    marker_sent_ = true;
    const EegEpoch& trial = ds.trials[static_cast<size_t>(order_[static_cast<size_t>(trial_)])];
    return Frame::marker(trial_start_, static_cast<uint8_t>(trial.label));
  }

  const EegEpoch& trial = ds.trials[static_cast<size_t>(order_[static_cast<size_t>(trial_)])];
  const int64_t imagery_onset = trial_start_ + cue_len;
  const int64_t record_begin = imagery_onset - trial.onset_index;
  const int64_t record_end = record_begin + trial.samples;
  const int64_t trial_end = trial_start_ + trial_span;

  const int64_t begin = static_cast<int64_t>(pos_);
  const int n = static_cast<int>(std::min<int64_t>(timing_.chunk_samples, trial_end - begin));
  std::vector<float> chunk(static_cast<size_t>(ds.channels) * n, 0.0f);
  const int64_t lo = std::max(begin, record_begin);
  const int64_t hi = std::min(begin + n, record_end);
  for (int64_t i = lo; i < hi; ++i) {
    const int rec_i = static_cast<int>(i - record_begin);
    for (int c = 0; c < ds.channels; ++c) {
      chunk[static_cast<size_t>(c) * n + (i - begin)] =
          static_cast<float>(trial.channel(c)[rec_i]);
    }
  }
  Frame f = Frame::data_frame(pos_, static_cast<uint16_t>(ds.channels), std::move(chunk));
  pos_ += static_cast<uint64_t>(n);

  if (static_cast<int64_t>(pos_) >= trial_end) {
    ++trial_;
    marker_sent_ = false;
    trial_start_ = pos_;
    if (timing_.rest_every > 0 && trial_ % timing_.rest_every == 0 &&
        trial_ < static_cast<int>(order_.size())) {
      trial_start_ += static_cast<uint64_t>(samples_of(timing_.rest_s));
      // the rest gap itself is streamed as zeros so the sample clock advances
      // continuously; emit it as part of the next trial's lead-in
    }
  }
  return f;
}

// ---- sockets ---------------------------------------------------------------

namespace {

void write_all(int fd, const uint8_t* data, size_t n) {
  size_t done = 0;
  while (done < n) {
    const ssize_t w = ::write(fd, data + done, n - done);
    if (w <= 0) fail_data("tcp: short write");
    done += static_cast<size_t>(w);
  }
}

}  // namespace

TcpFrameSource::TcpFrameSource(const std::string& host, uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || res == nullptr) {
    fail_data("tcp: cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    fail_data("tcp: socket() failed");
  }
  if (::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    ::freeaddrinfo(res);
    ::close(fd_);
    fd_ = -1;
    fail_data("tcp: cannot connect to " + host + ":" + service);
  }
  ::freeaddrinfo(res);
}

TcpFrameSource::~TcpFrameSource() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<Frame> TcpFrameSource::next() {
  for (;;) {
    if (auto f = parser_.next()) return f;
    if (eof_) return std::nullopt;
    uint8_t buf[16384];
    const ssize_t r = ::read(fd_, buf, sizeof(buf));
    if (r < 0) fail_data("tcp: read failed");
    if (r == 0) {
      eof_ = true;
      continue;
    }
    parser_.feed(buf, static_cast<size_t>(r));
  }
}

FrameServer::FrameServer(uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) fail_data("tcp: socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    fail_data("tcp: cannot bind port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 1) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    fail_data("tcp: listen failed");
  }
}

FrameServer::~FrameServer() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void FrameServer::serve_once(FrameSource& source) {
  const int client = ::accept(listen_fd_, nullptr, nullptr);
  if (client < 0) fail_data("tcp: accept failed");
  std::vector<uint8_t> buf;
  while (auto f = source.next()) {
    buf.clear();
    encode_frame(*f, buf);
    write_all(client, buf.data(), buf.size());
  }
  ::close(client);
}

}  // namespace bci
