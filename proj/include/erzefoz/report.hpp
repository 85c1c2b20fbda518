#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "erzefoz/analysis.hpp"
#include "erzefoz/noise_model.hpp"
#include "erzefoz/zefoz_search.hpp"

namespace erzefoz {

using json = nlohmann::json;

struct OutputMeta {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string dataset_version;

    json to_json() const;
};

std::string fmt(double v);

class OutputWriter {
public:
    OutputWriter(std::string dir, OutputMeta meta, bool csv = true, bool json = true);

    bool csv_enabled() const { return csv_; }
    bool json_enabled() const { return json_; }

    // Each returns the path written, or "" when the format is disabled.
    std::string write_csv(const std::string& name, const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows);
    std::string write_json(const std::string& name, json body);
    std::string write_grid(const std::string& name, const std::vector<std::string>& comments,
                           const std::vector<std::vector<std::string>>& rows);

    const std::vector<std::string>& written() const { return written_; }
    const OutputMeta& meta() const { return meta_; }

private:
    std::string path(const std::string& name) const;
    void finish(std::ofstream& out, const std::string& p);

    std::string dir_;
    OutputMeta meta_;
    bool csv_;
    bool json_;
    std::vector<std::string> written_;
};

json to_json(const Vec3& v);
json to_json(const Mat3& m);
json to_json(const ZefozPoint& p);
ZefozPoint zefoz_point_from_json(const json& j);

std::vector<std::string> zefoz_csv_header();
std::vector<std::string> zefoz_csv_row(const ZefozPoint& p);

json to_json(const FluctuationDistribution& d);
json to_json(const GeometryFit& f);

}  // namespace erzefoz
