#include "coopercept/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "json.hpp"

#include "coopercept/error.hpp"
#include "coopercept/image_io.hpp"
#include "coopercept/pyramid.hpp"
#include "coopercept/svg.hpp"
#include "coopercept/util.hpp"
#include "coopercept/version.hpp"

namespace coopercept::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(const char* prefix, int frame_id, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06d%s", prefix, frame_id, ext);
    return buf;
}

std::optional<fs::path> find_frame_file(const fs::path& dir, const char* prefix, int frame_id) {
    if (dir.empty()) return std::nullopt;
    for (const char* ext : {".png", ".pgm"}) {
        fs::path p = dir / frame_name(prefix, frame_id, ext);
        if (fs::exists(p)) return p;
    }
    return std::nullopt;
}

const json* find_key(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double num_at(const json& section, const std::string& where, const char* key, double def) {
    const json* v = find_key(section, key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError("config key " + where + "." + key + " must be a number");
    return v->get<double>();
}

int int_at(const json& section, const std::string& where, const char* key, int def) {
    const json* v = find_key(section, key);
    if (!v) return def;
    if (!v->is_number_integer())
        throw ConfigError("config key " + where + "." + key + " must be an integer");
    return v->get<int>();
}

std::array<double, 4> arr4_at(const json& section, const std::string& where, const char* key,
                              const std::array<double, 4>& def) {
    const json* v = find_key(section, key);
    if (!v) return def;
    if (!v->is_array() || v->size() != 4)
        throw ConfigError("config key " + where + "." + key + " must be an array of 4 numbers");
    std::array<double, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!(*v)[i].is_number())
            throw ConfigError("config key " + where + "." + key + " must be an array of 4 numbers");
        out[i] = (*v)[i].get<double>();
    }
    return out;
}

fs::path path_at(const json& paths, const char* key) {
    const json* v = find_key(paths, key);
    if (!v) return {};
    if (!v->is_string()) throw ConfigError(std::string("config key paths.") + key + " must be a string");
    return fs::path(v->get<std::string>());
}

int resolve_jobs(int jobs) {
    if (jobs > 0) return jobs;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void ensure_out_dir(const PipelineConfig& cfg) {
    if (cfg.paths.out_dir.empty()) throw ConfigError("missing key: paths.out_dir");
    fs::create_directories(cfg.paths.out_dir);
}

void clamp_image(ImageBuffer& img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 255.0f);
}

// Gaze marker disc with a half-pixel coverage ramp, matching the fusion mask.
void draw_marker(ImageBuffer& patch, double cx, double cy, double radius) {
    const float color[3] = {220.0f, 38.0f, 38.0f};
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            const double cover = std::clamp(radius - std::hypot(x - cx, y - cy) + 0.5, 0.0, 1.0);
            if (cover <= 0.0) continue;
            const float w = static_cast<float>(cover);
            if (patch.channels == 3) {
                for (int c = 0; c < 3; ++c)
                    patch.at(x, y, c) = w * color[c] + (1.0f - w) * patch.at(x, y, c);
            } else {
                patch.at(x, y) = w * 224.0f + (1.0f - w) * patch.at(x, y);
            }
        }
    }
}

std::string hash_or_empty(const fs::path& p) {
    return fs::exists(p) ? hash_file(p) : std::string("missing");
}

}  // namespace

fs::path PipelineConfig::gaze_csv_path() const {
    return paths.gaze_csv.empty() ? paths.out_dir / "gaze.csv" : paths.gaze_csv;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }

    PipelineConfig cfg;
    cfg.config_path = path;
    const json* paths = find_key(j, "paths");
    if (!paths || !paths->is_object()) throw ConfigError("missing key: paths");
    cfg.paths.eye_dir = path_at(*paths, "eye_dir");
    cfg.paths.camera_dir = path_at(*paths, "camera_dir");
    cfg.paths.screen_dir = path_at(*paths, "screen_dir");
    cfg.paths.frames_csv = path_at(*paths, "frames_csv");
    cfg.paths.gaze_csv = path_at(*paths, "gaze_csv");
    cfg.paths.detections_jsonl = path_at(*paths, "detections_jsonl");
    cfg.paths.ground_truth_jsonl = path_at(*paths, "ground_truth_jsonl");
    cfg.paths.rtk_csv = path_at(*paths, "rtk_csv");
    cfg.paths.out_dir = path_at(*paths, "out_dir");
    if (cfg.paths.out_dir.empty()) throw ConfigError("missing key: paths.out_dir");

    // Relative paths are relative to the config file, not the working directory.
    const fs::path base = path.parent_path();
    for (fs::path* p : {&cfg.paths.eye_dir, &cfg.paths.camera_dir, &cfg.paths.screen_dir,
                        &cfg.paths.frames_csv, &cfg.paths.gaze_csv, &cfg.paths.detections_jsonl,
                        &cfg.paths.ground_truth_jsonl, &cfg.paths.rtk_csv, &cfg.paths.out_dir}) {
        if (!p->empty() && p->is_relative()) *p = base / *p;
    }

    const json empty = json::object();
    const json& geom = find_key(j, "geometry") ? j["geometry"] : empty;
    cfg.geometry.source_w = num_at(geom, "geometry", "source_w", cfg.geometry.source_w);
    cfg.geometry.source_h = num_at(geom, "geometry", "source_h", cfg.geometry.source_h);
    cfg.geometry.target_w = num_at(geom, "geometry", "target_w", cfg.geometry.target_w);
    cfg.geometry.target_h = num_at(geom, "geometry", "target_h", cfg.geometry.target_h);
    cfg.geometry.x_offset = num_at(geom, "geometry", "x_offset", cfg.geometry.x_offset);
    cfg.geometry.y_offset = num_at(geom, "geometry", "y_offset", cfg.geometry.y_offset);
    cfg.geometry.marker_radius = num_at(geom, "geometry", "marker_radius", cfg.geometry.marker_radius);

    const json& gf = find_key(j, "guided_filter") ? j["guided_filter"] : empty;
    cfg.filter.window_radius = int_at(gf, "guided_filter", "window_radius", cfg.filter.window_radius);
    cfg.filter.epsilon = num_at(gf, "guided_filter", "epsilon", cfg.filter.epsilon);

    const json& canny = find_key(j, "canny") ? j["canny"] : empty;
    cfg.canny.low = num_at(canny, "canny", "low", cfg.canny.low);
    cfg.canny.high = num_at(canny, "canny", "high", cfg.canny.high);
    if (cfg.canny.low < 0.0 || cfg.canny.low >= cfg.canny.high)
        throw ConfigError("canny thresholds require 0 <= low < high");

    const json& hough = find_key(j, "hough") ? j["hough"] : empty;
    cfg.hough_r_min = int_at(hough, "hough", "r_min", cfg.hough_r_min);
    cfg.hough_r_max = int_at(hough, "hough", "r_max", cfg.hough_r_max);
    if (cfg.hough_r_min < 1) throw ConfigError("hough.r_min must be >= 1");
    if (cfg.hough_r_max != 0 && cfg.hough_r_max < cfg.hough_r_min)
        throw ConfigError("hough.r_max must be 0 (auto) or >= hough.r_min");

    cfg.log_sigma = num_at(j, "config", "log_sigma", cfg.log_sigma);
    if (!(cfg.log_sigma > 0.0)) throw ConfigError("log_sigma must be > 0");

    const json& ekf = find_key(j, "ekf") ? j["ekf"] : empty;
    cfg.ekf.q = arr4_at(ekf, "ekf", "q", cfg.ekf.q);
    cfg.ekf.r = arr4_at(ekf, "ekf", "r", cfg.ekf.r);
    cfg.ekf.p0 = arr4_at(ekf, "ekf", "p0", cfg.ekf.p0);
    for (double v : cfg.ekf.q)
        if (v < 0.0) throw ConfigError("ekf.q entries must be >= 0");
    for (double v : cfg.ekf.r)
        if (!(v > 0.0)) throw ConfigError("ekf.r entries must be > 0");
    for (double v : cfg.ekf.p0)
        if (v < 0.0) throw ConfigError("ekf.p0 entries must be >= 0");

    const json& cal = find_key(j, "calibration") ? j["calibration"] : empty;
    cfg.calibration.s_x1 = num_at(cal, "calibration", "s_x1", cfg.calibration.s_x1);
    cfg.calibration.s_x2 = num_at(cal, "calibration", "s_x2", cfg.calibration.s_x2);
    cfg.calibration.s_y1 = num_at(cal, "calibration", "s_y1", cfg.calibration.s_y1);
    cfg.calibration.s_y2 = num_at(cal, "calibration", "s_y2", cfg.calibration.s_y2);
    cfg.calibration.p_x1 = num_at(cal, "calibration", "p_x1", cfg.calibration.p_x1);
    cfg.calibration.p_x2 = num_at(cal, "calibration", "p_x2", cfg.calibration.p_x2);
    cfg.calibration.p_y1 = num_at(cal, "calibration", "p_y1", cfg.calibration.p_y1);
    cfg.calibration.p_y2 = num_at(cal, "calibration", "p_y2", cfg.calibration.p_y2);

    cfg.iou_thresh = num_at(j, "config", "iou_thresh", cfg.iou_thresh);
    cfg.conf_thresh = num_at(j, "config", "conf_thresh", cfg.conf_thresh);
    if (cfg.iou_thresh < 0.0 || cfg.iou_thresh > 1.0) throw ConfigError("iou_thresh must be in [0,1]");
    if (cfg.conf_thresh < 0.0 || cfg.conf_thresh > 1.0)
        throw ConfigError("conf_thresh must be in [0,1]");

    if (const json* bins = find_key(j, "ttc_bins")) {
        if (!bins->is_array() || bins->size() != 2 || !(*bins)[0].is_number() ||
            !(*bins)[1].is_number())
            throw ConfigError("ttc_bins must be an array of 2 numbers");
        cfg.ttc_bins = {(*bins)[0].get<double>(), (*bins)[1].get<double>()};
    }
    if (!(cfg.ttc_bins[0] > 0.0) || !(cfg.ttc_bins[0] < cfg.ttc_bins[1]))
        throw ConfigError("ttc_bins must be strictly increasing and positive");

    if (const json* v = find_key(j, "literal_step6")) {
        if (!v->is_boolean()) throw ConfigError("config key literal_step6 must be a boolean");
        cfg.literal_step6 = v->get<bool>();
    }
    cfg.jobs = int_at(j, "config", "jobs", cfg.jobs);
    if (cfg.jobs < 0) throw ConfigError("jobs must be >= 0");

    try {
        cfg.geometry.validate();
        cfg.filter.validate();
        cfg.calibration.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

void write_config(const PipelineConfig& cfg, const fs::path& path) {
    json j;
    json paths;
    paths["eye_dir"] = cfg.paths.eye_dir.string();
    paths["camera_dir"] = cfg.paths.camera_dir.string();
    paths["screen_dir"] = cfg.paths.screen_dir.string();
    paths["frames_csv"] = cfg.paths.frames_csv.string();
    paths["gaze_csv"] = cfg.paths.gaze_csv.string();
    paths["detections_jsonl"] = cfg.paths.detections_jsonl.string();
    paths["ground_truth_jsonl"] = cfg.paths.ground_truth_jsonl.string();
    paths["rtk_csv"] = cfg.paths.rtk_csv.string();
    paths["out_dir"] = cfg.paths.out_dir.string();
    j["paths"] = paths;
    j["geometry"] = {{"source_w", cfg.geometry.source_w},   {"source_h", cfg.geometry.source_h},
                     {"target_w", cfg.geometry.target_w},   {"target_h", cfg.geometry.target_h},
                     {"x_offset", cfg.geometry.x_offset},   {"y_offset", cfg.geometry.y_offset},
                     {"marker_radius", cfg.geometry.marker_radius}};
    j["guided_filter"] = {{"window_radius", cfg.filter.window_radius},
                          {"epsilon", cfg.filter.epsilon}};
    j["canny"] = {{"low", cfg.canny.low}, {"high", cfg.canny.high}};
    j["hough"] = {{"r_min", cfg.hough_r_min}, {"r_max", cfg.hough_r_max}};
    j["log_sigma"] = cfg.log_sigma;
    j["ekf"] = {{"q", cfg.ekf.q}, {"r", cfg.ekf.r}, {"p0", cfg.ekf.p0}};
    j["calibration"] = {{"s_x1", cfg.calibration.s_x1}, {"s_x2", cfg.calibration.s_x2},
                        {"s_y1", cfg.calibration.s_y1}, {"s_y2", cfg.calibration.s_y2},
                        {"p_x1", cfg.calibration.p_x1}, {"p_x2", cfg.calibration.p_x2},
                        {"p_y1", cfg.calibration.p_y1}, {"p_y2", cfg.calibration.p_y2}};
    j["iou_thresh"] = cfg.iou_thresh;
    j["conf_thresh"] = cfg.conf_thresh;
    j["ttc_bins"] = cfg.ttc_bins;
    j["literal_step6"] = cfg.literal_step6;
    j["jobs"] = cfg.jobs;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config: " + path.string());
    out << j.dump(2) << "\n";
}

FrameIndex load_frame_index(const PipelineConfig& cfg) {
    if (cfg.paths.frames_csv.empty()) throw ConfigError("missing key: paths.frames_csv");
    const CsvTable table = read_csv(cfg.paths.frames_csv);
    int id_col = -1, utc_col = -1;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c] == "frame_id") id_col = static_cast<int>(c);
        if (table.header[c] == "utc_ms") utc_col = static_cast<int>(c);
    }
    if (id_col < 0 || utc_col < 0)
        throw ParseError(cfg.paths.frames_csv.string(), 1, "header must contain frame_id,utc_ms");

    FrameIndex index;
    index.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        FrameEntry e;
        e.frame_id = static_cast<int>(
            parse_int(table.rows[r][id_col], cfg.paths.frames_csv.string(), table.row_lines[r]));
        e.utc_ms = parse_double(table.rows[r][utc_col], cfg.paths.frames_csv.string(),
                                table.row_lines[r]);
        if (!index.empty() &&
            (e.frame_id <= index.back().frame_id || e.utc_ms <= index.back().utc_ms))
            throw ParseError(cfg.paths.frames_csv.string(), table.row_lines[r],
                             "frame_id and utc_ms must be strictly increasing");
        if (!cfg.paths.camera_dir.empty())
            e.camera = cfg.paths.camera_dir / frame_name("cam", e.frame_id, ".png");
        e.left_eye = find_frame_file(cfg.paths.eye_dir, "left", e.frame_id);
        e.right_eye = find_frame_file(cfg.paths.eye_dir, "right", e.frame_id);
        e.single_eye = find_frame_file(cfg.paths.eye_dir, "eye", e.frame_id);
        e.screen = find_frame_file(cfg.paths.screen_dir, "screen", e.frame_id);
        index.push_back(std::move(e));
    }
    return index;
}

void write_gaze_csv(const fs::path& path, const std::vector<GazeRecord>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "UTC,Gaze_X,Gaze_Y,PupilArea\n";
    for (const GazeRecord& r : rows) {
        out << static_cast<long long>(std::llround(r.utc_ms)) << ',' << format_fixed(r.x, 3) << ','
            << format_fixed(r.y, 3) << ',' << format_fixed(r.area, 3) << '\n';
    }
}

std::vector<GazeRecord> read_gaze_csv(const fs::path& path) {
    const CsvTable table = read_csv(path);
    const std::vector<std::string> want = {"UTC", "Gaze_X", "Gaze_Y", "PupilArea"};
    std::array<int, 4> col{-1, -1, -1, -1};
    for (std::size_t c = 0; c < table.header.size(); ++c)
        for (std::size_t k = 0; k < want.size(); ++k)
            if (table.header[c] == want[k]) col[k] = static_cast<int>(c);
    for (std::size_t k = 0; k < want.size(); ++k)
        if (col[k] < 0) throw ParseError(path.string(), 1, "header must contain " + want[k]);

    std::vector<GazeRecord> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        GazeRecord g;
        g.utc_ms = parse_double(table.rows[r][col[0]], path.string(), table.row_lines[r]);
        g.x = parse_double(table.rows[r][col[1]], path.string(), table.row_lines[r]);
        g.y = parse_double(table.rows[r][col[2]], path.string(), table.row_lines[r]);
        g.area = parse_double(table.rows[r][col[3]], path.string(), table.row_lines[r]);
        if (!rows.empty() && g.utc_ms <= rows.back().utc_ms)
            throw ParseError(path.string(), table.row_lines[r],
                             "UTC timestamps must be strictly increasing");
        rows.push_back(g);
    }
    return rows;
}

std::vector<track::RtkRecord> read_rtk_csv(const fs::path& path) {
    const CsvTable table = read_csv(path);
    const std::vector<std::string> want = {"utc_ms",     "rel_x_m",    "rel_y_m",
                                           "ego_vy_mps", "obj_vy_mps", "gap_m"};
    std::array<int, 6> col;
    col.fill(-1);
    for (std::size_t c = 0; c < table.header.size(); ++c)
        for (std::size_t k = 0; k < want.size(); ++k)
            if (table.header[c] == want[k]) col[k] = static_cast<int>(c);
    for (std::size_t k = 0; k < want.size(); ++k)
        if (col[k] < 0) throw ParseError(path.string(), 1, "header must contain " + want[k]);

    std::vector<track::RtkRecord> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        track::RtkRecord rec;
        rec.utc_ms = parse_double(table.rows[r][col[0]], path.string(), table.row_lines[r]);
        rec.rel_x_m = parse_double(table.rows[r][col[1]], path.string(), table.row_lines[r]);
        rec.rel_y_m = parse_double(table.rows[r][col[2]], path.string(), table.row_lines[r]);
        rec.ego_vy_mps = parse_double(table.rows[r][col[3]], path.string(), table.row_lines[r]);
        rec.obj_vy_mps = parse_double(table.rows[r][col[4]], path.string(), table.row_lines[r]);
        rec.gap_m = parse_double(table.rows[r][col[5]], path.string(), table.row_lines[r]);
        if (!rows.empty() && rec.utc_ms <= rows.back().utc_ms)
            throw ParseError(path.string(), table.row_lines[r],
                             "utc_ms must be strictly increasing");
        rows.push_back(rec);
    }
    return rows;
}

StageResult run_pupil(const PipelineConfig& cfg) {
    ensure_out_dir(cfg);
    const FrameIndex index = load_frame_index(cfg);
    std::vector<const FrameEntry*> eyes;
    for (const FrameEntry& e : index)
        if (e.left_eye || e.right_eye || e.single_eye) eyes.push_back(&e);
    if (eyes.empty()) throw EmptyInput("no eye frames found under " + cfg.paths.eye_dir.string());

    pupil::PupilDetectOptions opt;
    opt.filter = cfg.filter;
    opt.canny = cfg.canny;
    opt.r_min = cfg.hough_r_min;
    opt.r_max = cfg.hough_r_max;

    StageResult result;
    result.inputs.push_back(cfg.paths.frames_csv);
    std::vector<std::optional<GazeRecord>> rows(eyes.size());
    std::mutex io_mutex;

    parallel_for(eyes.size(), resolve_jobs(cfg.jobs), [&](std::size_t i) {
        const FrameEntry& e = *eyes[i];
        auto detect_one = [&](const fs::path& p) -> std::optional<pupil::PupilSample> {
            const ImageBuffer img = io::read_gray(p);
            {
                std::lock_guard<std::mutex> lock(io_mutex);
                result.inputs.push_back(p);
            }
            try {
                return pupil::detect_pupil(img, opt, e.utc_ms);
            } catch (const NoCircleFound&) {
                log_warn("frame " + std::to_string(e.frame_id) + ": no circle found in " +
                         p.string());
                return std::nullopt;
            }
        };
        std::optional<pupil::PupilSample> left, right;
        if (e.left_eye) left = detect_one(*e.left_eye);
        if (e.right_eye) right = detect_one(*e.right_eye);
        if (!e.left_eye && !e.right_eye && e.single_eye) left = detect_one(*e.single_eye);

        if (left && right) {
            const gaze::GazePoint g = pupil::merge_eyes(*left, *right);
            rows[i] = GazeRecord{g.utc_ms, g.x, g.y, (left->area + right->area) / 2.0};
        } else if (left || right) {
            const pupil::PupilSample& s = left ? *left : *right;
            rows[i] = GazeRecord{s.utc_ms, s.x, s.y, s.area};
        }
    });

    std::vector<GazeRecord> kept;
    for (const auto& r : rows)
        if (r) kept.push_back(*r);
    if (kept.empty()) throw Error("no pupils detected in any eye frame");
    log_info("pupil: " + std::to_string(kept.size()) + "/" + std::to_string(eyes.size()) +
             " frames produced gaze samples");

    const fs::path out = cfg.gaze_csv_path();
    fs::create_directories(out.parent_path().empty() ? fs::path(".") : out.parent_path());
    write_gaze_csv(out, kept);
    result.outputs.push_back(out);
    return result;
}

StageResult run_fuse(const PipelineConfig& cfg) {
    ensure_out_dir(cfg);
    const FrameIndex index = load_frame_index(cfg);
    std::vector<const FrameEntry*> frames;
    for (const FrameEntry& e : index)
        if (!e.camera.empty() && fs::exists(e.camera)) frames.push_back(&e);
    if (frames.empty())
        throw EmptyInput("no camera frames found under " + cfg.paths.camera_dir.string());

    StageResult result;
    result.inputs.push_back(cfg.paths.frames_csv);
    result.inputs.push_back(cfg.gaze_csv_path());
    const std::vector<GazeRecord> gaze_rows = read_gaze_csv(cfg.gaze_csv_path());
    std::vector<gaze::GazePoint> gaze_series;
    gaze_series.reserve(gaze_rows.size());
    for (const GazeRecord& r : gaze_rows) gaze_series.push_back(gaze::GazePoint{r.utc_ms, r.x, r.y});

    std::vector<double> frame_times;
    frame_times.reserve(frames.size());
    for (const FrameEntry* e : frames) frame_times.push_back(e->utc_ms);
    std::map<double, gaze::GazePoint> on_time;
    if (gaze_series.size() >= 2)
        for (const gaze::GazePoint& g : gaze::resample_gaze(gaze_series, frame_times))
            on_time[g.utc_ms] = g;

    const pyr::LoGKernel kernel =
        pyr::log_kernel(cfg.log_sigma, static_cast<int>(std::ceil(3.0 * cfg.log_sigma)));

    std::mutex io_mutex;
    std::size_t fused_count = 0, copied_count = 0;
    parallel_for(frames.size(), resolve_jobs(cfg.jobs), [&](std::size_t i) {
        const FrameEntry& e = *frames[i];
        ImageBuffer cam = io::read_image(e.camera);
        if (cam.width != static_cast<int>(cfg.geometry.target_w) ||
            cam.height != static_cast<int>(cfg.geometry.target_h))
            throw ConfigError("camera frame " + e.camera.string() +
                              " size differs from configured target geometry");
        const fs::path out_path = cfg.paths.out_dir / frame_name("fused", e.frame_id, ".png");

        std::optional<gaze::GazeMapping> mapping;
        const auto it = on_time.find(e.utc_ms);
        const bool have_gaze = it != on_time.end() && it->second.x >= 0.0 &&
                               it->second.x <= cfg.geometry.source_w && it->second.y >= 0.0 &&
                               it->second.y <= cfg.geometry.source_h;
        if (have_gaze) mapping = gaze::map_gaze(it->second, cfg.geometry);

        std::size_t local_inputs = 1;
        if (!mapping) {
            io::write_image(out_path, cam);
            log_info("frame " + std::to_string(e.frame_id) +
                     ": no on-screen gaze sample, copied unmodified");
        } else {
            ImageBuffer patch;
            if (e.screen) {
                ImageBuffer screen = io::read_image(*e.screen);
                if (screen.width != static_cast<int>(cfg.geometry.source_w) ||
                    screen.height != static_cast<int>(cfg.geometry.source_h))
                    throw ConfigError("screen frame " + e.screen->string() +
                                      " size differs from configured source geometry");
                patch = gaze::crop_patch(screen, it->second, cfg.geometry);
                local_inputs = 2;
            } else {
                const gaze::GazePoint center{e.utc_ms, mapping->center_x, mapping->center_y};
                patch = gaze::crop_patch(cam, center, cfg.geometry);
            }
            const int side = cfg.geometry.crop_side();
            const double px = mapping->center_x - (std::lround(mapping->center_x) - side / 2);
            const double py = mapping->center_y - (std::lround(mapping->center_y) - side / 2);
            draw_marker(patch, px, py, cfg.geometry.marker_radius);
            const ImageBuffer response = pyr::smooth_patch(patch, kernel);
            for (std::size_t k = 0; k < patch.data.size(); ++k) patch.data[k] += response.data[k];
            clamp_image(patch);
            std::optional<ImageBuffer> fused =
                pyr::fuse_frame(cam, patch, mapping->box, cfg.geometry, cfg.literal_step6);
            if (fused) {
                io::write_image(out_path, *fused);
            } else {
                io::write_image(out_path, cam);
                log_info("frame " + std::to_string(e.frame_id) +
                         ": off-screen gaze, copied unmodified");
            }
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        result.inputs.push_back(e.camera);
        if (local_inputs == 2) result.inputs.push_back(*e.screen);
        result.outputs.push_back(out_path);
        if (mapping) ++fused_count; else ++copied_count;
    });
    log_info("fuse: " + std::to_string(fused_count) + " frames fused, " +
             std::to_string(copied_count) + " copied");
    return result;
}

StageResult run_track(const PipelineConfig& cfg) {
    ensure_out_dir(cfg);
    const FrameIndex index = load_frame_index(cfg);
    std::map<int, double> frame_utc;
    for (const FrameEntry& e : index) frame_utc[e.frame_id] = e.utc_ms;

    StageResult result;
    result.inputs.push_back(cfg.paths.frames_csv);
    result.inputs.push_back(cfg.gaze_csv_path());
    result.inputs.push_back(cfg.paths.detections_jsonl);
    result.inputs.push_back(cfg.paths.rtk_csv);

    const std::vector<GazeRecord> gaze_rows = read_gaze_csv(cfg.gaze_csv_path());
    track::Trajectory gaze_traj;
    gaze_traj.source = track::Source::gaze;
    for (const GazeRecord& r : gaze_rows) {
        if (r.x < 0.0 || r.x > cfg.geometry.source_w || r.y < 0.0 || r.y > cfg.geometry.source_h)
            continue;
        const auto m = gaze::map_gaze(gaze::GazePoint{r.utc_ms, r.x, r.y}, cfg.geometry);
        if (m) gaze_traj.points.push_back(track::TrackPoint{r.utc_ms, m->center_x, m->center_y});
    }

    if (cfg.paths.detections_jsonl.empty()) throw ConfigError("missing key: paths.detections_jsonl");
    const std::vector<deteval::Detection> dets =
        deteval::parse_detections_jsonl(cfg.paths.detections_jsonl);
    std::map<int, const deteval::Detection*> best_per_frame;
    for (const deteval::Detection& d : dets) {
        auto [it, inserted] = best_per_frame.try_emplace(d.frame_id, &d);
        if (!inserted && d.confidence > it->second->confidence) it->second = &d;
    }
    track::Trajectory det_traj;
    det_traj.source = track::Source::detector;
    std::vector<track::TimedBox> boxes;
    for (const auto& [frame_id, det] : best_per_frame) {
        const auto t = frame_utc.find(frame_id);
        if (t == frame_utc.end())
            throw Error("detection frame_id " + std::to_string(frame_id) +
                        " has no timestamp in the frame index");
        det_traj.points.push_back(track::TrackPoint{
            t->second, det->box.x + det->box.w / 2.0, det->box.y + det->box.h / 2.0});
        boxes.push_back(
            track::TimedBox{t->second, det->box.x, det->box.y, det->box.w, det->box.h});
    }

    if (cfg.paths.rtk_csv.empty()) throw ConfigError("missing key: paths.rtk_csv");
    const std::vector<track::RtkRecord> rtk = read_rtk_csv(cfg.paths.rtk_csv);
    if (rtk.empty()) throw EmptyInput("RTK file has no records");
    const track::Trajectory gt_traj =
        track::ground_truth_pixels(rtk, cfg.calibration, cfg.geometry);
    std::vector<std::pair<double, double>> ttc_series;
    ttc_series.reserve(rtk.size());
    for (const track::RtkRecord& r : rtk)
        ttc_series.emplace_back(
            r.utc_ms, track::ttc(track::ConflictState{r.gap_m, r.ego_vy_mps, r.obj_vy_mps}));

    if (det_traj.points.size() < 2)
        throw Error("trajectory fusion needs at least 2 detector frames");
    std::vector<double> gaps;
    for (std::size_t i = 1; i < det_traj.points.size(); ++i)
        gaps.push_back(det_traj.points[i].utc_ms - det_traj.points[i - 1].utc_ms);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    const double dt_s = gaps[gaps.size() / 2] / 1000.0;

    if (gaze_traj.points.size() < 2) throw Error("fewer than 2 usable gaze samples for fusion");
    const double t_first =
        std::max(gaze_traj.points.front().utc_ms, det_traj.points.front().utc_ms);
    const track::Trajectory gaze_at_start = track::resample_trajectory(gaze_traj, {t_first});
    const track::Trajectory det_at_start = track::resample_trajectory(det_traj, {t_first});
    if (gaze_at_start.points.empty() || det_at_start.points.empty())
        throw Error("gaze and detector trajectories do not overlap in time");
    Eigen::Vector4d x0;
    x0 << (gaze_at_start.points[0].x + det_at_start.points[0].x) / 2.0,
        (gaze_at_start.points[0].y + det_at_start.points[0].y) / 2.0, 0.0, 0.0;
    const track::EkfModel model = track::cv_fusion_model(dt_s, cfg.ekf.q, cfg.ekf.r, x0, cfg.ekf.p0);
    const track::Trajectory fused_traj = track::fuse_trajectories(gaze_traj, det_traj, model);

    std::vector<double> fused_times;
    for (const auto& p : fused_traj.points) fused_times.push_back(p.utc_ms);
    const track::Trajectory gt_common = track::resample_trajectory(gt_traj, fused_times);
    json rmse_json;
    rmse_json["gaze"] = track::rmse(track::resample_trajectory(gaze_traj, fused_times), gt_common);
    rmse_json["detector"] =
        track::rmse(track::resample_trajectory(det_traj, fused_times), gt_common);
    rmse_json["fused"] = track::rmse(fused_traj, gt_common);

    // Zone statistics join on RTK timestamps; detector boxes snap to the
    // nearest frame within half the median frame gap.
    std::vector<double> rtk_times;
    for (const auto& [t, v] : ttc_series) rtk_times.push_back(t);
    track::Trajectory gaze_at_rtk;
    gaze_at_rtk.source = track::Source::gaze;
    if (gaze_traj.points.size() >= 2)
        gaze_at_rtk = track::resample_trajectory(gaze_traj, rtk_times);
    std::vector<track::TimedBox> boxes_at_rtk;
    for (double t : rtk_times) {
        const track::TimedBox* nearest = nullptr;
        double best = std::numeric_limits<double>::infinity();
        for (const track::TimedBox& b : boxes) {
            const double d = std::abs(b.utc_ms - t);
            if (d < best) {
                best = d;
                nearest = &b;
            }
        }
        if (nearest && best <= dt_s * 1000.0 / 2.0 + 1e-9) {
            track::TimedBox snapped = *nearest;
            snapped.utc_ms = t;
            boxes_at_rtk.push_back(snapped);
        }
    }
    const track::ZoneReport zones = track::gaze_zone_stats(gaze_at_rtk, boxes_at_rtk, ttc_series,
                                                           cfg.ttc_bins[0], cfg.ttc_bins[1]);

    const fs::path traj_path = cfg.paths.out_dir / "trajectories.csv";
    {
        std::ofstream out(traj_path);
        if (!out) throw IoError("cannot write " + traj_path.string());
        out << "utc_ms,x_px,y_px,source\n";
        for (const track::Trajectory* t : {&gaze_traj, &det_traj, &fused_traj, &gt_traj})
            for (const track::TrackPoint& p : t->points)
                out << static_cast<long long>(std::llround(p.utc_ms)) << ','
                    << format_fixed(p.x, 3) << ',' << format_fixed(p.y, 3) << ','
                    << track::source_name(t->source) << '\n';
    }

    json metrics;
    metrics["rmse"] = rmse_json;
    json ttc_json = json::array();
    int far_n = 0, mid_n = 0, near_n = 0;
    for (const auto& [t, v] : ttc_series) {
        json row;
        row["utc_ms"] = t;
        if (std::isinf(v))
            row["ttc_s"] = nullptr;  // no closing speed
        else
            row["ttc_s"] = v;
        ttc_json.push_back(row);
        if (v > cfg.ttc_bins[1])
            ++far_n;
        else if (v > cfg.ttc_bins[0])
            ++mid_n;
        else
            ++near_n;
    }
    metrics["ttc"] = {{"series", ttc_json},
                      {"bins", {{"far", far_n}, {"mid", mid_n}, {"near", near_n}}},
                      {"edges", {{"near", cfg.ttc_bins[0]}, {"far", cfg.ttc_bins[1]}}}};
    json zones_json = json::object();
    auto zone_to_json = [](const std::optional<track::ZoneStats>& z) -> json {
        json out;
        out["count"] = z->count;
        out["inside_fraction"] = z->inside_fraction;
        out["mean_gaze_dx"] = z->mean_gaze_dx;
        out["mean_gaze_dy"] = z->mean_gaze_dy;
        out["mean_anchor_x"] = z->mean_anchor_x;
        out["mean_anchor_y"] = z->mean_anchor_y;
        return out;
    };
    if (zones.far) zones_json["far"] = zone_to_json(zones.far);
    if (zones.mid) zones_json["mid"] = zone_to_json(zones.mid);
    if (zones.near) zones_json["near"] = zone_to_json(zones.near);
    metrics["zones"] = zones_json;

    const fs::path metrics_path = cfg.paths.out_dir / "metrics.json";
    {
        std::ofstream out(metrics_path);
        if (!out) throw IoError("cannot write " + metrics_path.string());
        out << metrics.dump(2) << "\n";
    }

    const fs::path svg_path = cfg.paths.out_dir / "trajectories.svg";
    svg::write_trajectory_svg(svg_path, {gaze_traj, det_traj, fused_traj, gt_traj});

    result.outputs = {traj_path, metrics_path, svg_path};
    log_info("track: fused " + std::to_string(fused_traj.points.size()) + " points, rmse(fused)=" +
             format_fixed(rmse_json["fused"].get<double>(), 4) + " px");
    return result;
}

StageResult run_eval(const PipelineConfig& cfg) {
    ensure_out_dir(cfg);
    if (cfg.paths.detections_jsonl.empty()) throw ConfigError("missing key: paths.detections_jsonl");
    if (cfg.paths.ground_truth_jsonl.empty())
        throw ConfigError("missing key: paths.ground_truth_jsonl");
    const std::vector<deteval::Detection> dets =
        deteval::parse_detections_jsonl(cfg.paths.detections_jsonl);
    const std::vector<deteval::GroundTruthBox> gts =
        deteval::parse_ground_truth_jsonl(cfg.paths.ground_truth_jsonl);
    const deteval::EvalReport report = deteval::evaluate(dets, gts, cfg.iou_thresh, cfg.conf_thresh);

    json j;
    json classes = json::object();
    for (const auto& [cls, m] : report.classes) {
        json c;
        if (m.ap)
            c["ap"] = *m.ap;
        else
            c["ap"] = nullptr;
        c["precision"] = m.prf.precision;
        c["recall"] = m.prf.recall;
        c["f1"] = m.prf.f1;
        classes[cls] = c;
    }
    j["classes"] = classes;
    j["map"] = report.map;

    const fs::path out_path = cfg.paths.out_dir / "eval.json";
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path.string());
    out << j.dump(2) << "\n";

    StageResult result;
    result.inputs = {cfg.paths.detections_jsonl, cfg.paths.ground_truth_jsonl};
    result.outputs = {out_path};
    log_info("eval: " + std::to_string(report.classes.size()) + " classes, mAP=" +
             format_fixed(report.map, 4));
    return result;
}

void run(const PipelineConfig& cfg, const std::vector<Stage>& stages) {
    ensure_out_dir(cfg);
    StageResult all;
    std::string command;
    for (const Stage s : stages) {
        StageResult r;
        switch (s) {
            case Stage::pupil:
                r = run_pupil(cfg);
                command += command.empty() ? "pupil" : ",pupil";
                break;
            case Stage::fuse:
                r = run_fuse(cfg);
                command += command.empty() ? "fuse" : ",fuse";
                break;
            case Stage::track:
                r = run_track(cfg);
                command += command.empty() ? "track" : ",track";
                break;
            case Stage::eval:
                r = run_eval(cfg);
                command += command.empty() ? "eval" : ",eval";
                break;
        }
        all.inputs.insert(all.inputs.end(), r.inputs.begin(), r.inputs.end());
        all.outputs.insert(all.outputs.end(), r.outputs.begin(), r.outputs.end());
    }

    json manifest;
    manifest["generator"] = {{"name", "coopercept"}, {"version", kVersion}};
    manifest["command"] = command;
    manifest["literal_step6"] = cfg.literal_step6;
    if (!cfg.config_path.empty())
        manifest["config"] = {{"path", cfg.config_path.string()},
                              {"hash", hash_or_empty(cfg.config_path)}};
    std::set<std::string> produced;
    for (const fs::path& p : all.outputs) produced.insert(p.string());
    std::map<std::string, std::string> inputs, outputs;
    for (const fs::path& p : all.inputs)
        if (!p.empty() && !produced.count(p.string())) inputs[p.string()] = hash_or_empty(p);
    for (const fs::path& p : all.outputs) outputs[p.string()] = hash_or_empty(p);
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;

    const fs::path manifest_path = cfg.paths.out_dir / "manifest.json";
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write " + manifest_path.string());
    out << manifest.dump(2) << "\n";
}

}  // namespace coopercept::pipeline
