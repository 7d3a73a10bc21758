#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coopercept::deteval {

struct Box {
    double x = 0.0;
    double y = 0.0;  // top-left corner
    double w = 0.0;
    double h = 0.0;
};

struct Detection {
    int frame_id = 0;
    std::string class_name;
    Box box;
    double confidence = 0.0;
};

struct GroundTruthBox {
    int frame_id = 0;
    std::string class_name;
    Box box;
};

double iou(const Box& a, const Box& b);

// 11-point interpolated AP at the given IoU threshold, with greedy one-to-one
// matching by descending confidence within each frame. A class with no ground
// truth has no defined AP and returns nullopt.
std::optional<double> ap_11point(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruthBox>& gts, const std::string& cls,
                                 double iou_thresh = 0.5);

// Mean of the defined per-class APs.
double map_score(const std::map<std::string, double>& per_class);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Prf prf1(const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
         const std::string& cls, double iou_thresh = 0.5, double conf_thresh = 0.25);

// x * tanh(softplus(x)), overflow-guarded for large x.
double mish(double x);

struct ClassMetrics {
    std::optional<double> ap;
    Prf prf;
};

struct EvalReport {
    std::map<std::string, ClassMetrics> classes;
    double map = 0.0;  // over classes with defined AP
};

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
                    double iou_thresh = 0.5, double conf_thresh = 0.25);

// JSON lines {"frame":int,"class":str,"x":f,"y":f,"w":f,"h":f,"conf":f};
// ground truth omits conf. Errors carry the offending line number.
std::vector<Detection> parse_detections_jsonl(const std::filesystem::path& path);
std::vector<GroundTruthBox> parse_ground_truth_jsonl(const std::filesystem::path& path);

}  // namespace coopercept::deteval
