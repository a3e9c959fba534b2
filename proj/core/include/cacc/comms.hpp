#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cacc/gp.hpp"

namespace cacc {

struct ChannelConfig {
  double comm_period_s = 0.1;
  double success_prob = 1.0;
  std::uint64_t seed = 0;
};

// One broadcast from a vehicle: its planned acceleration profile over the
// prediction horizon and, optionally, its fitted speed model.
struct Packet {
  std::uint16_t sender = 0;
  std::uint32_t step = 0;
  std::optional<std::vector<double>> profile;
  std::optional<GpPayload> gp;
};

// Wire format, little endian: sender u16, step u32, flags u8, then the
// payloads flagged present. A profile is a u8 count followed by that many
// binary64 values; a model payload is a fixed block of 13 binary64 values.
std::vector<std::uint8_t> encode(const Packet& p);
Packet decode(const std::vector<std::uint8_t>& bytes);

// Broadcast period in control steps; throws unless comm_period_s is an
// integer multiple of ts.
int comm_period_steps(double ts, double comm_period_s);
bool is_broadcast_step(std::uint32_t step, double ts, double comm_period_s);

// Deterministic per-(seed, step, link) uniform draw in [0, 1). Replaying a
// scenario with the same seed reproduces every loss event.
double link_uniform(std::uint64_t seed, std::uint32_t step, int link);
bool deliver(const ChannelConfig& cfg, std::uint32_t step, int link);

}  // namespace cacc
