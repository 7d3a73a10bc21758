#include "coopercept/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "coopercept/error.hpp"

namespace coopercept::track {

namespace {

void check_increasing(const Trajectory& t, const char* what) {
    for (std::size_t i = 1; i < t.points.size(); ++i)
        if (t.points[i].utc_ms <= t.points[i - 1].utc_ms)
            throw InvalidArgument(std::string(what) + " timestamps must be strictly increasing");
}

TrackPoint interp(const Trajectory& t, std::size_t hi, double time_ms) {
    const TrackPoint& a = t.points[hi - 1];
    const TrackPoint& b = t.points[hi];
    const double w = (time_ms - a.utc_ms) / (b.utc_ms - a.utc_ms);
    return TrackPoint{time_ms, a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)};
}

}  // namespace

const char* source_name(Source s) {
    switch (s) {
        case Source::gaze: return "gaze";
        case Source::detector: return "detector";
        case Source::fused: return "fused";
        case Source::ground_truth: return "ground_truth";
    }
    return "unknown";
}

EkfState initial_state(const EkfModel& m) { return EkfState{m.x0, m.P0, 0}; }

EkfState ekf_predict(const EkfState& s, const EkfModel& m) {
    const Eigen::MatrixXd F = m.F(s.x);
    EkfState out;
    out.x = m.f(s.x);
    out.P = F * s.P * F.transpose() + m.Q;
    out.P = ((out.P + out.P.transpose()) / 2.0).eval();
    out.k = s.k;
    return out;
}

EkfState ekf_update(const EkfState& s, const Eigen::VectorXd& z, const EkfModel& m) {
    const Eigen::MatrixXd H = m.H(s.x);
    const Eigen::MatrixXd S = H * s.P * H.transpose() + m.R;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
    if (!lu.isInvertible()) throw SingularInnovation("innovation covariance is singular");
    const Eigen::MatrixXd K = s.P * H.transpose() * lu.inverse();
    EkfState out;
    out.x = s.x + K * (z - m.h(s.x));
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(s.P.rows(), s.P.cols());
    out.P = (I - K * H) * s.P;
    out.P = ((out.P + out.P.transpose()) / 2.0).eval();
    out.k = s.k + 1;
    return out;
}

EkfModel cv_fusion_model(double dt_s, const std::array<double, 4>& q_diag,
                         const std::array<double, 4>& r_diag, const Eigen::Vector4d& x0,
                         const std::array<double, 4>& p0_diag) {
    if (!(dt_s > 0.0)) throw InvalidArgument("constant-velocity step must be > 0 seconds");
    Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
    F(0, 2) = dt_s;
    F(1, 3) = dt_s;
    Eigen::MatrixXd H(4, 4);
    H << 1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0;
    EkfModel m;
    m.state_dim = 4;
    m.meas_dim = 4;
    m.f = [F](const Eigen::VectorXd& x) { return (F * x).eval(); };
    m.F = [F](const Eigen::VectorXd&) { return Eigen::MatrixXd(F); };
    m.h = [H](const Eigen::VectorXd& x) { return (H * x).eval(); };
    m.H = [H](const Eigen::VectorXd&) { return H; };
    m.Q = Eigen::Vector4d(q_diag[0], q_diag[1], q_diag[2], q_diag[3]).asDiagonal();
    m.R = Eigen::Vector4d(r_diag[0], r_diag[1], r_diag[2], r_diag[3]).asDiagonal();
    m.x0 = x0;
    m.P0 = Eigen::Vector4d(p0_diag[0], p0_diag[1], p0_diag[2], p0_diag[3]).asDiagonal();
    return m;
}

Trajectory fuse_trajectories(const Trajectory& gaze, const Trajectory& detector, const EkfModel& m) {
    check_increasing(gaze, "gaze");
    check_increasing(detector, "detector");
    if (gaze.points.size() < 2 || detector.points.empty())
        throw EmptyOverlap("trajectory fusion needs >= 2 gaze points and >= 1 detector point");
    const double t0 = std::max(gaze.points.front().utc_ms, detector.points.front().utc_ms);
    const double t1 = std::min(gaze.points.back().utc_ms, detector.points.back().utc_ms);

    Trajectory fused;
    fused.source = Source::fused;
    EkfState s = initial_state(m);
    std::size_t hi = 1;
    for (const TrackPoint& d : detector.points) {
        if (d.utc_ms < t0 || d.utc_ms > t1) continue;
        while (gaze.points[hi].utc_ms < d.utc_ms) ++hi;
        const TrackPoint g = interp(gaze, hi, d.utc_ms);
        Eigen::VectorXd z(4);
        z << g.x, g.y, d.x, d.y;
        s = ekf_update(ekf_predict(s, m), z, m);
        fused.points.push_back(TrackPoint{d.utc_ms, s.x(0), s.x(1)});
    }
    if (fused.points.empty()) throw EmptyOverlap("gaze and detector trajectories do not overlap in time");
    return fused;
}

double ttc(const ConflictState& c) {
    const double dv = c.v1y + c.v2y;
    if (dv <= 0.0) return std::numeric_limits<double>::infinity();
    return c.delta_s / dv;
}

void GroundTruthCalibration::validate() const {
    if (p_x2 == p_x1 || p_y2 == p_y1)
        throw InvalidArgument("ground-truth calibration has a zero pixel baseline");
}

Trajectory ground_truth_pixels(const std::vector<RtkRecord>& rtk, const GroundTruthCalibration& cal,
                               const gaze::ScreenGeometry& geom) {
    cal.validate();
    geom.validate();
    const double fx = cal.ratio_x() * geom.target_w / (geom.source_w - geom.target_w);
    const double fy = cal.ratio_y() * geom.target_h / (geom.source_h - geom.target_h);
    Trajectory out;
    out.source = Source::ground_truth;
    out.points.reserve(rtk.size());
    for (const RtkRecord& r : rtk)
        out.points.push_back(TrackPoint{r.utc_ms, fx * r.rel_x_m, fy * r.rel_y_m});
    return out;
}

Trajectory resample_trajectory(const Trajectory& traj, const std::vector<double>& times_ms) {
    check_increasing(traj, source_name(traj.source));
    if (traj.points.size() < 2)
        throw InvalidArgument("trajectory resampling needs at least 2 points");
    Trajectory out;
    out.source = traj.source;
    std::size_t hi = 1;
    for (double t : times_ms) {
        if (t < traj.points.front().utc_ms || t > traj.points.back().utc_ms) continue;
        while (traj.points[hi].utc_ms < t) ++hi;
        out.points.push_back(interp(traj, hi, t));
    }
    return out;
}

double rmse(const Trajectory& pred, const Trajectory& truth) {
    check_increasing(pred, "pred");
    check_increasing(truth, "truth");
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t j = 0;
    for (const TrackPoint& p : pred.points) {
        while (j < truth.points.size() && truth.points[j].utc_ms < p.utc_ms) ++j;
        if (j == truth.points.size()) break;
        if (truth.points[j].utc_ms != p.utc_ms) continue;
        const double dx = p.x - truth.points[j].x;
        const double dy = p.y - truth.points[j].y;
        sum += dx * dx + dy * dy;
        ++n;
    }
    if (n == 0) throw EmptyOverlap("trajectories share no timestamps");
    return std::sqrt(sum / static_cast<double>(n));
}

ZoneReport gaze_zone_stats(const Trajectory& gaze, const std::vector<TimedBox>& boxes,
                           const std::vector<std::pair<double, double>>& ttc_series,
                           double near_edge, double far_edge) {
    if (!(near_edge < far_edge)) throw InvalidArgument("TTC bin edges must be strictly increasing");
    std::map<double, const TrackPoint*> gaze_at;
    for (const TrackPoint& p : gaze.points) gaze_at[p.utc_ms] = &p;
    std::map<double, const TimedBox*> box_at;
    for (const TimedBox& b : boxes) box_at[b.utc_ms] = &b;

    struct Acc {
        int count = 0;
        int inside = 0;
        double dx = 0.0, dy = 0.0, ax = 0.0, ay = 0.0;
    };
    Acc acc[3];
    for (const auto& [t, value] : ttc_series) {
        const auto g = gaze_at.find(t);
        const auto b = box_at.find(t);
        if (g == gaze_at.end() || b == box_at.end()) continue;
        const int bin = value > far_edge ? 0 : (value > near_edge ? 1 : 2);
        Acc& a = acc[bin];
        const TrackPoint& gp = *g->second;
        const TimedBox& bx = *b->second;
        ++a.count;
        if (gp.x >= bx.x && gp.x <= bx.x + bx.w && gp.y >= bx.y && gp.y <= bx.y + bx.h) ++a.inside;
        a.dx += gp.x - bx.center_x();
        a.dy += gp.y - bx.center_y();
        a.ax += bx.center_x();
        a.ay += bx.center_y();
    }

    auto finish = [](const Acc& a) -> std::optional<ZoneStats> {
        if (a.count == 0) return std::nullopt;
        const double n = a.count;
        return ZoneStats{a.count,  a.inside / n, a.dx / n, a.dy / n, a.ax / n, a.ay / n};
    };
    return ZoneReport{finish(acc[0]), finish(acc[1]), finish(acc[2])};
}

}  // namespace coopercept::track
