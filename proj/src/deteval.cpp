#include "coopercept/deteval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

#include "coopercept/error.hpp"

namespace coopercept::deteval {

namespace {

// Sorted det indices for cls plus TP flags after greedy confidence-ordered
// matching; shared by AP and P/R/F1.
struct Matches {
    std::vector<std::size_t> order;  // indices into dets, confidence descending
    std::vector<bool> tp;
    std::size_t gt_count = 0;
};

Matches match_class(const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
                    const std::string& cls, double iou_thresh, double conf_thresh) {
    Matches m;
    std::vector<std::size_t> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i)
        if (gts[i].class_name == cls) gt_idx.push_back(i);
    m.gt_count = gt_idx.size();

    for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].class_name == cls && dets[i].confidence >= conf_thresh) m.order.push_back(i);
    std::stable_sort(m.order.begin(), m.order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].confidence > dets[b].confidence;
    });

    std::vector<bool> used(gt_idx.size(), false);
    m.tp.resize(m.order.size(), false);
    for (std::size_t rank = 0; rank < m.order.size(); ++rank) {
        const Detection& d = dets[m.order[rank]];
        double best = 0.0;
        std::size_t best_j = gt_idx.size();
        for (std::size_t j = 0; j < gt_idx.size(); ++j) {
            const GroundTruthBox& g = gts[gt_idx[j]];
            if (used[j] || g.frame_id != d.frame_id) continue;
            const double v = iou(d.box, g.box);
            if (v > best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j < gt_idx.size() && best >= iou_thresh) {
            used[best_j] = true;
            m.tp[rank] = true;
        }
    }
    return m;
}

nlohmann::json parse_line(const std::filesystem::path& path, int line_no, const std::string& line) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), line_no, e.what());
    }
}

double require_number(const nlohmann::json& j, const char* key, const std::filesystem::path& path,
                      int line_no) {
    if (!j.contains(key) || !j[key].is_number())
        throw ParseError(path.string(), line_no, std::string("missing numeric field \"") + key + "\"");
    return j[key].get<double>();
}

void fill_common(const nlohmann::json& j, const std::filesystem::path& path, int line_no,
                 int& frame_id, std::string& cls, Box& box) {
    if (!j.contains("frame") || !j["frame"].is_number_integer())
        throw ParseError(path.string(), line_no, "missing integer field \"frame\"");
    if (!j.contains("class") || !j["class"].is_string())
        throw ParseError(path.string(), line_no, "missing string field \"class\"");
    frame_id = j["frame"].get<int>();
    cls = j["class"].get<std::string>();
    box.x = require_number(j, "x", path, line_no);
    box.y = require_number(j, "y", path, line_no);
    box.w = require_number(j, "w", path, line_no);
    box.h = require_number(j, "h", path, line_no);
    if (box.w <= 0.0 || box.h <= 0.0)
        throw ParseError(path.string(), line_no, "box w and h must be > 0");
}

}  // namespace

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

std::optional<double> ap_11point(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruthBox>& gts, const std::string& cls,
                                 double iou_thresh) {
    const Matches m = match_class(dets, gts, cls, iou_thresh, 0.0);
    if (m.gt_count == 0) return std::nullopt;

    std::vector<double> precision, recall;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < m.order.size(); ++rank) {
        if (m.tp[rank]) ++tp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(m.gt_count));
    }
    double ap = 0.0;
    for (int i = 0; i <= 10; ++i) {
        const double r = i / 10.0;
        double p_interp = 0.0;
        for (std::size_t k = 0; k < recall.size(); ++k)
            if (recall[k] >= r - 1e-12) p_interp = std::max(p_interp, precision[k]);
        ap += p_interp;
    }
    return ap / 11.0;
}

double map_score(const std::map<std::string, double>& per_class) {
    if (per_class.empty()) throw EmptyInput("mAP needs at least one class with a defined AP");
    double sum = 0.0;
    for (const auto& [cls, ap] : per_class) sum += ap;
    return sum / static_cast<double>(per_class.size());
}

Prf prf1(const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
         const std::string& cls, double iou_thresh, double conf_thresh) {
    const Matches m = match_class(dets, gts, cls, iou_thresh, conf_thresh);
    const std::size_t tp = static_cast<std::size_t>(std::count(m.tp.begin(), m.tp.end(), true));
    const std::size_t fp = m.order.size() - tp;
    const std::size_t fn = m.gt_count - tp;
    Prf out;
    out.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.f1 = out.precision + out.recall == 0.0
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

double mish(double x) {
    const double softplus = x > 20.0 ? x : std::log1p(std::exp(x));
    return x * std::tanh(softplus);
}

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruthBox>& gts,
                    double iou_thresh, double conf_thresh) {
    std::set<std::string> classes;
    for (const Detection& d : dets) classes.insert(d.class_name);
    for (const GroundTruthBox& g : gts) classes.insert(g.class_name);
    if (classes.empty()) throw EmptyInput("no detections or ground truth to evaluate");

    EvalReport report;
    std::map<std::string, double> defined;
    for (const std::string& cls : classes) {
        ClassMetrics cm;
        cm.ap = ap_11point(dets, gts, cls, iou_thresh);
        cm.prf = prf1(dets, gts, cls, iou_thresh, conf_thresh);
        if (cm.ap) defined[cls] = *cm.ap;
        report.classes[cls] = std::move(cm);
    }
    report.map = map_score(defined);
    return report;
}

template <typename Row, typename Fill>
static std::vector<Row> parse_jsonl(const std::filesystem::path& path, Fill fill) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Row> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const nlohmann::json j = parse_line(path, line_no, line);
        Row row;
        fill(j, line_no, row);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<Detection> parse_detections_jsonl(const std::filesystem::path& path) {
    return parse_jsonl<Detection>(path, [&](const nlohmann::json& j, int line_no, Detection& d) {
        fill_common(j, path, line_no, d.frame_id, d.class_name, d.box);
        d.confidence = require_number(j, "conf", path, line_no);
        if (d.confidence < 0.0 || d.confidence > 1.0)
            throw ParseError(path.string(), line_no, "conf must be within [0,1]");
    });
}

std::vector<GroundTruthBox> parse_ground_truth_jsonl(const std::filesystem::path& path) {
    return parse_jsonl<GroundTruthBox>(path,
                                       [&](const nlohmann::json& j, int line_no, GroundTruthBox& g) {
                                           fill_common(j, path, line_no, g.frame_id, g.class_name,
                                                       g.box);
                                       });
}

}  // namespace coopercept::deteval
