#pragma once

#include <filesystem>

namespace fixturegen {

inline constexpr int kFrameCount = 10;
inline constexpr double kUtc0 = 1620436346000.0;
inline constexpr double kFrameGapMs = 117.0;

// Vehicle center in camera pixels at frame i (left-turn arc).
double vehicle_x(int i);
double vehicle_y(int i);

// Writes the 10-frame synthetic drive fixture (eye and camera frames, frame
// index, detections, ground truth boxes, RTK log, config.json) into dir and
// returns the config path. Output is byte-deterministic.
std::filesystem::path write_fixture(const std::filesystem::path& dir);

}  // namespace fixturegen
