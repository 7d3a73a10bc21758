#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coopercept/deteval.hpp"
#include "coopercept/gaze.hpp"
#include "coopercept/pupil.hpp"
#include "coopercept/track.hpp"

namespace coopercept::pipeline {

struct Paths {
    std::filesystem::path eye_dir;
    std::filesystem::path camera_dir;
    std::filesystem::path screen_dir;  // optional source-screen frames for patch crops
    std::filesystem::path frames_csv;
    std::filesystem::path gaze_csv;  // written by pupil, read by fuse/track
    std::filesystem::path detections_jsonl;
    std::filesystem::path ground_truth_jsonl;
    std::filesystem::path rtk_csv;
    std::filesystem::path out_dir;
};

struct EkfConfig {
    std::array<double, 4> q{0.01, 0.01, 0.1, 0.1};
    std::array<double, 4> r{4.0, 4.0, 4.0, 4.0};
    std::array<double, 4> p0{25.0, 25.0, 25.0, 25.0};
};

struct PipelineConfig {
    Paths paths;
    gaze::ScreenGeometry geometry;
    pupil::GuidedFilterParams filter;
    pupil::CannyThresholds canny;
    int hough_r_min = 5;
    int hough_r_max = 0;  // 0 = half of min frame dimension
    double log_sigma = 1.4;
    EkfConfig ekf;
    track::GroundTruthCalibration calibration;
    double iou_thresh = 0.5;
    double conf_thresh = 0.25;
    std::array<double, 2> ttc_bins{1.03, 2.0};
    bool literal_step6 = false;
    int jobs = 0;  // 0 = hardware concurrency

    std::filesystem::path config_path;  // original file, recorded in the manifest

    std::filesystem::path gaze_csv_path() const;  // paths.gaze_csv or out_dir/gaze.csv
};

// Reads the JSON config, applies paper defaults for every key except "paths",
// and validates value constraints eagerly.
PipelineConfig load_config(const std::filesystem::path& path);
void write_config(const PipelineConfig& cfg, const std::filesystem::path& path);

struct FrameEntry {
    int frame_id = 0;
    double utc_ms = 0.0;
    std::filesystem::path camera;  // cam_%06d.png, present or not
    std::optional<std::filesystem::path> left_eye;
    std::optional<std::filesystem::path> right_eye;
    std::optional<std::filesystem::path> single_eye;
    std::optional<std::filesystem::path> screen;
};
using FrameIndex = std::vector<FrameEntry>;

// frames_csv (frame_id,utc_ms) joined against the conventional file names
// cam_/left_/right_/eye_/screen_%06d.png in their configured directories.
FrameIndex load_frame_index(const PipelineConfig& cfg);

struct GazeRecord {
    double utc_ms = 0.0;
    double x = 0.0;
    double y = 0.0;
    double area = 0.0;
};

// Table-IV column order: UTC,Gaze_X,Gaze_Y,PupilArea.
void write_gaze_csv(const std::filesystem::path& path, const std::vector<GazeRecord>& rows);
std::vector<GazeRecord> read_gaze_csv(const std::filesystem::path& path);

// utc_ms,rel_x_m,rel_y_m,ego_vy_mps,obj_vy_mps,gap_m
std::vector<track::RtkRecord> read_rtk_csv(const std::filesystem::path& path);

struct StageResult {
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
};

StageResult run_pupil(const PipelineConfig& cfg);
StageResult run_fuse(const PipelineConfig& cfg);
StageResult run_track(const PipelineConfig& cfg);
StageResult run_eval(const PipelineConfig& cfg);

enum class Stage { pupil, fuse, track, eval };

// Runs the stages in order and writes out_dir/manifest.json covering the
// config, all inputs, and all outputs with content hashes.
void run(const PipelineConfig& cfg, const std::vector<Stage>& stages);

}  // namespace coopercept::pipeline
