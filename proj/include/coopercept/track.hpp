#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coopercept/gaze.hpp"

namespace coopercept::track {

enum class Source { gaze, detector, fused, ground_truth };

const char* source_name(Source s);

struct TrackPoint {
    double utc_ms = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct Trajectory {
    Source source = Source::gaze;
    std::vector<TrackPoint> points;  // strictly increasing utc_ms
};

struct EkfModel {
    int state_dim = 0;
    int meas_dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;  // state transition
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> F;  // its Jacobian
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;  // measurement map
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> H;  // its Jacobian
    Eigen::MatrixXd Q;
    Eigen::MatrixXd R;
    Eigen::VectorXd x0;
    Eigen::MatrixXd P0;
};

struct EkfState {
    Eigen::VectorXd x;
    Eigen::MatrixXd P;
    int k = 0;
};

EkfState initial_state(const EkfModel& m);

// x- = f(x), P- = F P F^T + Q (symmetrized); k advances on update, not here.
EkfState ekf_predict(const EkfState& s, const EkfModel& m);

// K = P- H^T (H P- H^T + R)^-1, x+ = x- + K (z - h(x-)), P+ = (I - K H) P-.
EkfState ekf_update(const EkfState& s, const Eigen::VectorXd& z, const EkfModel& m);

// Constant-velocity state [x, y, vx, vy] over a fixed step, measured twice as
// the stacked [gaze_x, gaze_y, det_x, det_y] vector.
EkfModel cv_fusion_model(double dt_s, const std::array<double, 4>& q_diag,
                         const std::array<double, 4>& r_diag, const Eigen::Vector4d& x0,
                         const std::array<double, 4>& p0_diag);

// Runs predict/update at each detector timestamp inside the common time range,
// with the gaze series linearly interpolated there.
Trajectory fuse_trajectories(const Trajectory& gaze, const Trajectory& detector, const EkfModel& m);

struct ConflictState {
    double delta_s = 0.0;  // meters, >= 0
    double v1y = 0.0;      // ego speed in y, m/s
    double v2y = 0.0;      // conflict-vehicle speed in y, m/s
};

// delta_s / (v1y + v2y); +infinity when the closing speed is not positive.
double ttc(const ConflictState& c);

struct RtkRecord {
    double utc_ms = 0.0;
    double rel_x_m = 0.0;
    double rel_y_m = 0.0;
    double ego_vy_mps = 0.0;
    double obj_vy_mps = 0.0;
    double gap_m = 0.0;
};

struct GroundTruthCalibration {
    double s_x1 = 0.0, s_x2 = 1.0;  // meters
    double s_y1 = 0.0, s_y2 = 1.0;
    double p_x1 = 0.0, p_x2 = 1.0;  // pixels
    double p_y1 = 0.0, p_y2 = 1.0;

    void validate() const;
    double ratio_x() const { return (s_x2 - s_x1) / (p_x2 - p_x1); }
    double ratio_y() const { return (s_y2 - s_y1) / (p_y2 - p_y1); }
};

// p = calibration ratio * telescoping scale (x1/(x0-x1), y1/(y0-y1)) * s.
Trajectory ground_truth_pixels(const std::vector<RtkRecord>& rtk, const GroundTruthCalibration& cal,
                               const gaze::ScreenGeometry& geom);

// Linear interpolation at the requested times; times outside the trajectory
// range are dropped.
Trajectory resample_trajectory(const Trajectory& traj, const std::vector<double>& times_ms);

// Root-mean-squared Euclidean distance over exactly matching timestamps.
double rmse(const Trajectory& pred, const Trajectory& truth);

struct TimedBox {
    double utc_ms = 0.0;
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;  // top-left + size, pixels

    double center_x() const { return x + w / 2.0; }
    double center_y() const { return y + h / 2.0; }
};

struct ZoneStats {
    int count = 0;
    double inside_fraction = 0.0;
    double mean_gaze_dx = 0.0;  // gaze minus box center
    double mean_gaze_dy = 0.0;
    double mean_anchor_x = 0.0;  // detector anchor center position
    double mean_anchor_y = 0.0;
};

struct ZoneReport {
    std::optional<ZoneStats> far;   // ttc > far_edge
    std::optional<ZoneStats> mid;   // near_edge < ttc <= far_edge
    std::optional<ZoneStats> near;  // ttc <= near_edge
};

// Joins the three series on exact timestamps and bins by TTC; empty bins stay
// absent rather than reporting zeros.
ZoneReport gaze_zone_stats(const Trajectory& gaze, const std::vector<TimedBox>& boxes,
                           const std::vector<std::pair<double, double>>& ttc_series,
                           double near_edge = 1.03, double far_edge = 2.0);

}  // namespace coopercept::track
