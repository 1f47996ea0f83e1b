#include "bearingmon/stream.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "bearingmon/features.hpp"

namespace bearingmon {

namespace {

constexpr char kSessionMagic[] = "BMSESSN1";
constexpr std::uint32_t kSessionVersion = 1;

std::uint64_t encoder_fingerprint(const StreamConfig& config) {
  return config.encoder ? fnv1a(serialize_encoder(*config.encoder)) : 0;
}

// Parses whitespace-separated finite numbers; throws DataError otherwise.
Eigen::VectorXd parse_frame(std::string_view line, Eigen::Index expected) {
  Eigen::VectorXd v(expected);
  Eigen::Index n = 0;
  const char* p = line.data();
  const char* end = line.data() + line.size();
  while (true) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r' || *p == ',')) ++p;
    if (p == end) break;
    double x = 0.0;
    auto [next, ec] = std::from_chars(p, end, x);
    if (ec != std::errc{} || (next < end && *next != ' ' && *next != '\t' && *next != '\r' && *next != ','))
      throw DataError("non-numeric token at value " + std::to_string(n));
    if (!std::isfinite(x)) throw DataError("non-finite value at " + std::to_string(n));
    if (n >= expected) throw DataError("frame longer than " + std::to_string(expected) + " values");
    v(n++) = x;
    p = next;
  }
  if (n != expected)
    throw DataError("frame has " + std::to_string(n) + " values, expected " + std::to_string(expected));
  return v;
}

}  // namespace

void StreamConfig::validate() const {
  oselm.validate();
  if (!(K > 0.0)) throw ConfigError("K must be positive");
  if (snapshot_length <= 0 || snapshot_length % kAveragingWindow != 0)
    throw ConfigError("snapshot length must be a positive multiple of 5");
  if (mode == FeatureMode::automatic) {
    if (!encoder) throw ConfigError("auto mode streaming needs an encoder model");
    if (encoder->input_dim() != snapshot_length / kAveragingWindow)
      throw ConfigError("encoder input dimension " + std::to_string(encoder->input_dim()) +
                        " does not match snapshot length " + std::to_string(snapshot_length) + " / 5");
    if (encoder->code_dim() != oselm.input_dim)
      throw ConfigError("OSELM input dimension must equal the encoder code size");
  } else if (oselm.input_dim != HandcraftedVector::kSize) {
    throw ConfigError("OSELM input dimension must be 5 in handcrafted mode");
  }
}

std::string format_record(const StreamRecord& r) {
  std::string s = "{\"index\":" + std::to_string(r.index) + ",\"phase\":\"" +
                  std::string(to_string(r.phase)) + "\",\"deviation\":" + format_double(r.deviation) +
                  ",\"T\":" + (r.T ? format_double(*r.T) : std::string("null")) +
                  ",\"flag\":" + (r.flag ? "true" : "false") + "}";
  return s;
}

StreamSession::StreamSession(StreamConfig config)
    : config_((config.validate(), std::move(config))),
      model_(OselmModel::init_random(config_.oselm)),
      monitor_(config_.oselm.tc_percent, config_.oselm.window) {}

Phase StreamSession::phase() const { return model_.phase(); }

Eigen::VectorXd StreamSession::features(VectorCRef raw) const {
  if (raw.size() != config_.snapshot_length)
    throw ShapeError("snapshot has " + std::to_string(raw.size()) + " values, expected " +
                     std::to_string(config_.snapshot_length));
  if (config_.mode == FeatureMode::handcrafted) return handcrafted_vector(raw).to_vector();
  return config_.encoder->encode(average_downsample(raw));
}

std::vector<StreamRecord> StreamSession::push(VectorCRef raw) {
  const Eigen::VectorXd f = features(raw);
  const std::size_t index = accepted_++;
  std::vector<StreamRecord> out;

  switch (model_.phase()) {
    case Phase::collecting_init_batch: {
      pending_.push_back(f);
      if (pending_.size() < config_.oselm.init_batch) break;
      Eigen::MatrixXd batch(static_cast<Eigen::Index>(pending_.size()), f.size());
      for (std::size_t j = 0; j < pending_.size(); ++j)
        batch.row(static_cast<Eigen::Index>(j)) = pending_[j].transpose();
      model_.init_batch(batch);
      const std::size_t first = index + 1 - pending_.size();
      for (std::size_t j = 0; j < pending_.size(); ++j) {
        const double dev = model_.predict(pending_[j]).deviation;
        stats_.accumulate(dev);
        out.push_back({first + j, SamplePhase::init_batch, dev, std::nullopt, false});
      }
      pending_.clear();
      break;
    }
    case Phase::online_training: {
      const double dev = model_.predict(f).deviation;
      stats_.accumulate(dev);
      const double delta = model_.sequential_update(f);
      StreamRecord r{index, SamplePhase::training, dev, std::nullopt, false};
      if (observe(model_, monitor_, delta, index)) {
        threshold_ = threshold(stats_, config_.K);
        r.T = threshold_->T;
      }
      out.push_back(r);
      break;
    }
    case Phase::inference: {
      const double dev = model_.predict(f).deviation;
      out.push_back({index, SamplePhase::inference, dev, threshold_->T,
                     classify_sample(dev, threshold_->T) == SampleState::anomalous});
      break;
    }
  }
  return out;
}

std::vector<StreamRecord> StreamSession::push_line(std::string_view line) {
  try {
    const Eigen::VectorXd raw = parse_frame(line, config_.snapshot_length);
    // Feature extraction can still reject the frame (e.g. a dead sensor);
    // do it before push() touches any state.
    features(raw);
    return push(raw);
  } catch (const DataError& e) {
    last_error_ = e.what();
  } catch (const ShapeError& e) {
    last_error_ = e.what();
  } catch (const ZeroVarianceError& e) {
    last_error_ = e.what();
  } catch (const NonFiniteError& e) {
    last_error_ = e.what();
  }
  ++malformed_;
  return {};
}

std::string StreamSession::checkpoint() const {
  BinaryWriter w;
  w.magic(kSessionMagic);
  w.u32(kSessionVersion);
  w.u64(encoder_fingerprint(config_));
  w.u32(static_cast<std::uint32_t>(config_.mode));
  w.f64(config_.K);
  w.u64(static_cast<std::uint64_t>(config_.snapshot_length));
  w.u64(accepted_);
  w.u64(malformed_);
  w.u64(pending_.size());
  for (const auto& p : pending_) w.vector(p);
  model_.write(w);
  monitor_.write(w);
  w.u64(stats_.count());
  w.f64(stats_.mean());
  w.f64(stats_.m2());
  w.u32(threshold_ ? 1 : 0);
  if (threshold_) {
    w.f64(threshold_->K);
    w.f64(threshold_->T);
  }
  return w.finish();
}

StreamSession StreamSession::restore(std::string bytes, StreamConfig config) {
  StreamSession s(std::move(config));
  BinaryReader r(std::move(bytes));
  r.expect_magic(kSessionMagic);
  if (const auto version = r.u32(); version != kSessionVersion)
    throw ModelFormatError("unsupported session checkpoint version " + std::to_string(version));
  if (r.u64() != encoder_fingerprint(s.config_))
    throw ModelFormatError("checkpoint was written with a different encoder");
  if (r.u32() != static_cast<std::uint32_t>(s.config_.mode))
    throw ModelFormatError("checkpoint feature mode differs from the session config");
  s.config_.K = r.f64();
  if (r.u64() != static_cast<std::uint64_t>(s.config_.snapshot_length))
    throw ModelFormatError("checkpoint snapshot length differs from the session config");
  s.accepted_ = r.u64();
  s.malformed_ = r.u64();
  const auto pending = r.u64();
  if (pending > s.config_.oselm.init_batch) throw ModelFormatError("bad pending sample count");
  for (std::uint64_t i = 0; i < pending; ++i) s.pending_.push_back(r.vector());
  s.model_ = OselmModel::read(r);
  s.monitor_ = ConvergenceMonitor::read(r);
  const auto n = r.u64();
  const double mean = r.f64();
  const double m2 = r.f64();
  s.stats_ = DeviationStats::from_moments(n, mean, m2);
  if (r.u32()) {
    Threshold t;
    t.K = r.f64();
    t.T = r.f64();
    s.threshold_ = t;
  }
  r.expect_end();
  if (s.model_.input_dim() != s.config_.oselm.input_dim)
    throw ModelFormatError("checkpoint OSELM input size differs from the session config");
  if (s.model_.phase() == Phase::inference && !s.threshold_)
    throw ModelFormatError("inference-phase checkpoint without a threshold");
  return s;
}

void StreamSession::save_checkpoint(const std::filesystem::path& path) const {
  write_bytes(path, checkpoint());
}

StreamSession StreamSession::load_checkpoint(const std::filesystem::path& path, StreamConfig config) {
  return restore(read_bytes(path), std::move(config));
}

std::size_t run_stream(std::istream& in, std::ostream& out, std::ostream& log, StreamSession& session) {
  std::string line;
  std::size_t line_no = 0;
  const std::size_t malformed_before = session.malformed();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t bad = session.malformed();
    for (const auto& r : session.push_line(line)) out << format_record(r) << '\n';
    if (session.malformed() != bad)
      log << "warning: skipped malformed frame on line " << line_no << ": " << session.last_error()
          << '\n';
    out.flush();
  }
  return session.malformed() - malformed_before;
}

namespace {

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

void serve_connection(int fd, std::size_t id, const StreamConfig& config, const ServeOptions& options,
                      std::ostream& log, std::mutex& log_mu) {
  StreamSession session(config);
  std::string buffer;
  char chunk[1 << 16];
  bool open = true;
  while (open) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (auto eol = buffer.find('\n'); eol != std::string::npos; eol = buffer.find('\n', start)) {
      const std::string_view line(buffer.data() + start, eol - start);
      start = eol + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      const std::size_t bad = session.malformed();
      std::string reply;
      for (const auto& r : session.push_line(line)) reply += format_record(r) + "\n";
      if (session.malformed() != bad) {
        std::lock_guard lock(log_mu);
        log << "connection " << id << ": skipped malformed frame: " << session.last_error() << '\n';
      }
      if (!reply.empty() && !send_all(fd, reply)) {
        open = false;
        break;
      }
    }
    buffer.erase(0, start);
  }
  ::close(fd);
  if (options.checkpoint_prefix) {
    const auto path = options.checkpoint_prefix->string() + "." + std::to_string(id);
    session.save_checkpoint(path);
    std::lock_guard lock(log_mu);
    log << "connection " << id << " closed; checkpoint written to " << path << '\n';
  }
}

}  // namespace

void serve_tcp(const StreamConfig& config, const ServeOptions& options, std::ostream& log,
               const std::function<void(std::uint16_t)>& on_listen) {
  config.validate();
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  const int yes = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options.port);
  if (::inet_pton(AF_INET, options.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listener);
    throw ConfigError("invalid listen address " + options.host);
  }
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listener, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listener);
    throw Error("cannot listen on " + options.host + ":" + std::to_string(options.port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  const std::uint16_t port = ntohs(addr.sin_port);
  std::mutex log_mu;
  {
    std::lock_guard lock(log_mu);
    log << "listening on " << options.host << ":" << port << '\n';
  }
  if (on_listen) on_listen(port);

  std::vector<std::thread> workers;
  for (std::size_t id = 0; options.max_connections == 0 || id < options.max_connections; ++id) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) {
        --id;
        continue;
      }
      break;
    }
    workers.emplace_back([&, fd, id] {
      try {
        serve_connection(fd, id, config, options, log, log_mu);
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mu);
        log << "connection " << id << " failed: " << e.what() << '\n';
      }
    });
  }
  for (auto& t : workers) t.join();
  ::close(listener);
}

}  // namespace bearingmon
