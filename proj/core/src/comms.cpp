#include "cacc/comms.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cacc {

namespace {

constexpr std::uint8_t kFlagProfile = 0x01;
constexpr std::uint8_t kFlagGp = 0x02;

void put_u16(std::vector<std::uint8_t>* out, std::uint16_t v) {
  out->push_back(static_cast<std::uint8_t>(v & 0xFF));
  out->push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out->push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>* out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i)
    out->push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::invalid_argument("packet truncated");
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos]) |
                      static_cast<std::uint16_t>(buf[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode(const Packet& p) {
  if (p.profile && p.profile->size() > 255)
    throw std::invalid_argument("profile too long for the wire format");

  std::vector<std::uint8_t> out;
  put_u16(&out, p.sender);
  put_u32(&out, p.step);
  std::uint8_t flags = 0;
  if (p.profile) flags |= kFlagProfile;
  if (p.gp) flags |= kFlagGp;
  out.push_back(flags);
  if (p.profile) {
    out.push_back(static_cast<std::uint8_t>(p.profile->size()));
    for (double a : *p.profile) put_f64(&out, a);
  }
  if (p.gp) {
    for (double t : p.gp->train_time_s) put_f64(&out, t);
    for (double v : p.gp->train_speed) put_f64(&out, v);
    put_f64(&out, p.gp->signal_var);
    put_f64(&out, p.gp->length_scale);
    put_f64(&out, p.gp->mean_offset);
  }
  return out;
}

Packet decode(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  Packet p;
  p.sender = r.u16();
  p.step = r.u32();
  const std::uint8_t flags = r.u8();
  if (flags & ~(kFlagProfile | kFlagGp))
    throw std::invalid_argument("unknown packet flags");
  if (flags & kFlagProfile) {
    const int n = r.u8();
    std::vector<double> prof(n);
    for (int i = 0; i < n; ++i) prof[i] = r.f64();
    p.profile = std::move(prof);
  }
  if (flags & kFlagGp) {
    GpPayload gp;
    for (double& t : gp.train_time_s) t = r.f64();
    for (double& v : gp.train_speed) v = r.f64();
    gp.signal_var = r.f64();
    gp.length_scale = r.f64();
    gp.mean_offset = r.f64();
    p.gp = gp;
  }
  if (r.pos != bytes.size())
    throw std::invalid_argument("trailing bytes in packet");
  return p;
}

int comm_period_steps(double ts, double comm_period_s) {
  if (ts <= 0.0 || comm_period_s <= 0.0)
    throw std::invalid_argument("periods must be positive");
  const double ratio = comm_period_s / ts;
  const int steps = static_cast<int>(std::lround(ratio));
  if (steps < 1 || std::abs(ratio - steps) > 1e-6 * ratio)
    throw std::invalid_argument(
        "comm period must be an integer multiple of the sample period");
  return steps;
}

bool is_broadcast_step(std::uint32_t step, double ts, double comm_period_s) {
  return step % static_cast<std::uint32_t>(comm_period_steps(ts, comm_period_s)) == 0;
}

double link_uniform(std::uint64_t seed, std::uint32_t step, int link) {
  if (link < 0) throw std::invalid_argument("link index must be nonnegative");
  std::uint64_t z = seed;
  z ^= 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(step) + 1);
  z ^= 0xC2B2AE3D27D4EB4FULL * (static_cast<std::uint64_t>(link) + 1);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

bool deliver(const ChannelConfig& cfg, std::uint32_t step, int link) {
  if (cfg.success_prob < 0.0 || cfg.success_prob > 1.0)
    throw std::invalid_argument("success probability must lie in [0, 1]");
  if (cfg.success_prob >= 1.0) return true;
  return link_uniform(cfg.seed, step, link) < cfg.success_prob;
}

}  // namespace cacc
