#include "alforge/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace alforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<CurvePoint> load_curve_points(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("results_", 0) == 0 && name.size() > 5 &&
            name.substr(name.size() - 5) == ".json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("report: no results_*.json files in " + dir);

    std::vector<CurvePoint> points;
    for (const auto& f : files) {
        std::ifstream in(f);
        json j = json::parse(in);
        for (const auto& r : j["rounds"]) {
            CurvePoint p;
            p.strategy = j["config"]["strategy"];
            p.seed = j["config"]["seed"];
            p.round = r["round_index"];
            p.labeled_count = r["labeled_count"];
            p.miou = r["miou"];
            p.dice = r["dice"];
            points.push_back(std::move(p));
        }
    }
    return points;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string curves_to_svg(const std::vector<CurvePoint>& points) {
    // mean mIoU per (strategy, labeled_count)
    std::map<std::string, std::map<int, std::pair<double, int>>> agg;
    for (const auto& p : points) {
        auto& cell = agg[p.strategy][p.labeled_count];
        cell.first += p.miou;
        cell.second += 1;
    }
    int min_n = INT32_MAX, max_n = 0;
    for (const auto& [s, curve] : agg)
        for (const auto& [n, v] : curve) {
            min_n = std::min(min_n, n);
            max_n = std::max(max_n, n);
        }
    if (max_n == min_n) max_n = min_n + 1;

    const double w = 640, h = 420, ml = 60, mr = 150, mt = 30, mb = 50;
    auto px = [&](int n) { return ml + (w - ml - mr) * (n - min_n) / double(max_n - min_n); };
    auto py = [&](double miou) { return mt + (h - mt - mb) * (1.0 - miou); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
           "viewBox=\"0 0 640 420\">\n";
    svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(h - mb) + "\" x2=\"" + fmt(w - mr) +
           "\" y2=\"" + fmt(h - mb) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) + "\" y2=\"" +
           fmt(h - mb) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt((ml + w - mr) / 2) + "\" y=\"" + fmt(h - 12) +
           "\" text-anchor=\"middle\" font-size=\"14\">labeled samples</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt((mt + h - mb) / 2) +
           "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 " +
           fmt((mt + h - mb) / 2) + ")\">mIoU</text>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        const double v = tick / 5.0;
        svg += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(py(v) + 4) +
               "\" text-anchor=\"end\" font-size=\"11\">" + fmt(v) + "</text>\n";
    }

    int ci = 0;
    for (const auto& [strategy, curve] : agg) {
        const char* color = kPalette[ci % 6];
        std::string pts;
        for (const auto& [n, v] : curve) {
            if (!pts.empty()) pts += " ";
            pts += fmt(px(n)) + "," + fmt(py(v.first / v.second));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        svg += "<text x=\"" + fmt(w - mr + 10) + "\" y=\"" + fmt(mt + 18 + 18 * ci) +
               "\" font-size=\"12\" fill=\"" + color + "\">" + strategy + "</text>\n";
        ++ci;
    }
    svg += "</svg>\n";
    return svg;
}

std::string curves_to_csv(const std::vector<CurvePoint>& points) {
    std::string csv = "strategy,seed,round,labeled_count,miou,dice\n";
    char buf[64];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", p.miou, p.dice);
        csv += p.strategy + "," + std::to_string(p.seed) + "," + std::to_string(p.round) + "," +
               std::to_string(p.labeled_count) + "," + buf + "\n";
    }
    return csv;
}

}  // namespace alforge
