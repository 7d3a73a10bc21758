#pragma once

#include <filesystem>
#include <vector>

#include "coopercept/track.hpp"

namespace coopercept::svg {

// Fixed-size overlay plot of the given trajectories in pixel coordinates
// (y down, matching the camera frame), with a legend. Coordinates are written
// with two decimals so the file diffs cleanly in tests.
void write_trajectory_svg(const std::filesystem::path& path,
                          const std::vector<track::Trajectory>& trajectories);

}  // namespace coopercept::svg
