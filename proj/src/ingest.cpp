#include "starn/ingest.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>
#include <variant>

#include "starn/detail/text.hpp"
#include "starn/error.hpp"
#include "starn/rng.hpp"

namespace starn {

namespace {

using DoubleField = double AccidentRecord::*;
using IntField = int AccidentRecord::*;

struct FieldSpec {
    const char* name;
    std::variant<DoubleField, IntField> member;
};

const std::vector<FieldSpec>& field_specs() {
    static const std::vector<FieldSpec> specs = {
        {"latitude", &AccidentRecord::latitude},
        {"longitude", &AccidentRecord::longitude},
        {"hour", &AccidentRecord::hour},
        {"day_of_week", &AccidentRecord::day_of_week},
        {"day_of_month", &AccidentRecord::day_of_month},
        {"month", &AccidentRecord::month},
        {"elevation", &AccidentRecord::elevation},
        {"slope", &AccidentRecord::slope},
        {"curvature", &AccidentRecord::curvature},
        {"lanes", &AccidentRecord::lanes},
        {"road_width", &AccidentRecord::road_width},
        {"speed_limit", &AccidentRecord::speed_limit},
        {"road_type", &AccidentRecord::road_type},
        {"land_use", &AccidentRecord::land_use},
        {"flood_risk", &AccidentRecord::flood_risk},
        {"temperature", &AccidentRecord::temperature},
        {"precipitation", &AccidentRecord::precipitation},
        {"humidity", &AccidentRecord::humidity},
        {"wind_speed", &AccidentRecord::wind_speed},
        {"visibility", &AccidentRecord::visibility},
        {"weather_condition", &AccidentRecord::weather_condition},
        {"vehicle_type", &AccidentRecord::vehicle_type},
        {"traffic_density", &AccidentRecord::traffic_density},
        {"severity", &AccidentRecord::severity},
    };
    return specs;
}

[[noreturn]] void fail_row(std::size_t row, const std::string& field, const std::string& what) {
    std::ostringstream os;
    os << "row " << row << ": field '" << field << "' " << what;
    throw ValidationError(os.str(), row);
}

template <typename T>
void check_range(std::size_t row, const char* field, T v, T lo, T hi) {
    if (!(v >= lo && v <= hi)) {
        std::ostringstream os;
        os << "value " << v << " outside [" << lo << ", " << hi << "]";
        fail_row(row, field, os.str());
    }
}

void check_min(std::size_t row, const char* field, double v, double lo, bool strict) {
    if (!std::isfinite(v) || (strict ? !(v > lo) : !(v >= lo))) {
        std::ostringstream os;
        os << "value " << v << (strict ? " must be > " : " must be >= ") << lo;
        fail_row(row, field, os.str());
    }
}

}  // namespace

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"id"};
        for (const auto& f : field_specs()) c.emplace_back(f.name);
        return c;
    }();
    return cols;
}

void validate_record(const AccidentRecord& r, std::size_t row) {
    if (r.id.empty()) fail_row(row, "id", "is empty");
    check_range(row, "latitude", r.latitude, -90.0, 90.0);
    check_range(row, "longitude", r.longitude, -180.0, 180.0);
    check_range(row, "hour", r.hour, 0, 23);
    check_range(row, "day_of_week", r.day_of_week, 0, 6);
    check_range(row, "day_of_month", r.day_of_month, 1, 31);
    check_range(row, "month", r.month, 1, 12);
    for (auto [name, v] : {std::pair{"elevation", r.elevation}, {"slope", r.slope},
                           {"temperature", r.temperature}}) {
        if (!std::isfinite(v)) fail_row(row, name, "is not finite");
    }
    check_min(row, "curvature", r.curvature, 0.0, false);
    check_range(row, "lanes", r.lanes, 1, 64);
    check_min(row, "road_width", r.road_width, 0.0, true);
    check_min(row, "speed_limit", r.speed_limit, 0.0, true);
    check_range(row, "road_type", r.road_type, 0, kRoadTypeCodes - 1);
    check_range(row, "land_use", r.land_use, 0, kLandUseCodes - 1);
    check_range(row, "flood_risk", r.flood_risk, 0.0, 1.0);
    check_min(row, "precipitation", r.precipitation, 0.0, false);
    check_range(row, "humidity", r.humidity, 0.0, 100.0);
    check_min(row, "wind_speed", r.wind_speed, 0.0, false);
    check_min(row, "visibility", r.visibility, 0.0, false);
    check_range(row, "weather_condition", r.weather_condition, 0, kWeatherCodes - 1);
    check_range(row, "vehicle_type", r.vehicle_type, 0, kVehicleCodes - 1);
    check_min(row, "traffic_density", r.traffic_density, 0.0, false);
    check_range(row, "severity", r.severity, 0, kNumClasses - 1);
}

std::vector<AccidentRecord> read_csv(std::istream& in, std::string_view schema) {
    if (schema != kCsvSchema) {
        throw SchemaError("unsupported schema version '" + std::string(schema) + "'");
    }
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) {
        throw DataError("empty dataset: no header row");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    const auto header = detail::split(line);

    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name(header[i]);
        const bool known = name == "region" ||
                           std::find(csv_columns().begin(), csv_columns().end(), name) !=
                               csv_columns().end();
        if (!known) throw SchemaError("unknown column '" + name + "'");
        if (!index.emplace(name, i).second) throw SchemaError("duplicate column '" + name + "'");
    }
    for (const auto& col : csv_columns()) {
        if (!index.count(col)) throw SchemaError("missing column '" + col + "'");
    }
    const auto region_col = index.find("region");

    std::vector<AccidentRecord> records;
    std::unordered_set<std::string> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split(line);
        if (cells.size() != header.size()) {
            fail_row(row, "*", "has " + std::to_string(cells.size()) + " cells, expected " +
                                   std::to_string(header.size()));
        }
        AccidentRecord r;
        r.id = std::string(cells[index.find("id")->second]);
        for (const auto& spec : field_specs()) {
            const auto cell = cells[index.find(spec.name)->second];
            if (cell.empty()) fail_row(row, spec.name, "is missing");
            if (std::holds_alternative<DoubleField>(spec.member)) {
                auto v = detail::parse_number<double>(cell);
                if (!v || !std::isfinite(*v)) fail_row(row, spec.name, "is not a number: '" + std::string(cell) + "'");
                r.*std::get<DoubleField>(spec.member) = *v;
            } else {
                auto v = detail::parse_number<int>(cell);
                if (!v) fail_row(row, spec.name, "is not an integer: '" + std::string(cell) + "'");
                r.*std::get<IntField>(spec.member) = *v;
            }
        }
        if (region_col != index.end()) {
            const auto cell = cells[region_col->second];
            if (!cell.empty()) r.region = std::string(cell);
        }
        validate_record(r, row);
        if (!seen.insert(r.id).second) fail_row(row, "id", "duplicates an earlier id '" + r.id + "'");
        records.push_back(std::move(r));
    }
    if (records.empty()) throw DataError("empty dataset: no data rows");
    return records;
}

std::vector<AccidentRecord> load_csv(const std::filesystem::path& path, std::string_view schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_csv(in, schema);
}

void write_csv(std::ostream& out, std::span<const AccidentRecord> records) {
    const bool with_region = std::any_of(records.begin(), records.end(),
                                         [](const auto& r) { return r.region.has_value(); });
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    if (with_region) out << ",region";
    out << '\n';
    for (const auto& r : records) {
        out << r.id;
        for (const auto& spec : field_specs()) {
            out << ',';
            if (std::holds_alternative<DoubleField>(spec.member)) {
                out << detail::format_double(r.*std::get<DoubleField>(spec.member));
            } else {
                out << r.*std::get<IntField>(spec.member);
            }
        }
        if (with_region) out << ',' << r.region.value_or("");
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, std::span<const AccidentRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_csv(out, records);
}

// ---------------------------------------------------------------------------

int season_of(int month) {
    if (month == 12 || month <= 2) return 0;
    if (month <= 5) return 1;
    if (month <= 8) return 2;
    return 3;
}

std::vector<std::string> region_strata(std::span<const AccidentRecord> records) {
    std::vector<std::string> out(records.size());
    if (records.empty()) return out;
    const bool has_region = std::all_of(records.begin(), records.end(),
                                        [](const auto& r) { return r.region.has_value(); });
    if (has_region) {
        for (std::size_t i = 0; i < records.size(); ++i) out[i] = *records[i].region;
        return out;
    }
    double lat_lo = records[0].latitude, lat_hi = lat_lo;
    double lon_lo = records[0].longitude, lon_hi = lon_lo;
    for (const auto& r : records) {
        lat_lo = std::min(lat_lo, r.latitude);
        lat_hi = std::max(lat_hi, r.latitude);
        lon_lo = std::min(lon_lo, r.longitude);
        lon_hi = std::max(lon_hi, r.longitude);
    }
    const double lat_mid = 0.5 * (lat_lo + lat_hi);
    const double lon_mid = 0.5 * (lon_lo + lon_hi);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const int q = (records[i].latitude >= lat_mid ? 2 : 0) + (records[i].longitude >= lon_mid ? 1 : 0);
        out[i] = "Q" + std::to_string(q);
    }
    return out;
}

namespace {

void check_ratios(const SplitRatios& r) {
    if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be nonnegative and sum to 1");
    }
}

// Splits n into three counts, each the floor or ceil of n * share[c].
// `carry` accumulates count - quota across calls.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& share, std::array<double, 3>& carry) {
    std::array<double, 3> quota{};
    std::array<std::size_t, 3> base{};
    std::size_t assigned = 0;
    std::vector<int> fractional;
    for (int c = 0; c < 3; ++c) {
        quota[c] = share[c] * static_cast<double>(n);
        base[c] = static_cast<std::size_t>(std::floor(quota[c] + 1e-9));
        assigned += base[c];
        if (quota[c] - static_cast<double>(base[c]) > 1e-9) fractional.push_back(c);
    }
    const std::size_t up = std::min(n - std::min(n, assigned), fractional.size());
    std::array<std::size_t, 3> best = base;
    double best_cost = std::numeric_limits<double>::infinity();
    // subsets of the fractional quotas with exactly `up` members, in index order
    for (unsigned mask = 0; mask < (1u << fractional.size()); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != up) continue;
        auto counts = base;
        for (std::size_t b = 0; b < fractional.size(); ++b) {
            if (mask & (1u << b)) ++counts[fractional[b]];
        }
        double cost = 0.0;
        for (int c = 0; c < 3; ++c) cost += std::abs(carry[c] + static_cast<double>(counts[c]) - quota[c]);
        if (cost < best_cost - 1e-12) best_cost = cost, best = counts;
    }
    for (int c = 0; c < 3; ++c) carry[c] += static_cast<double>(best[c]) - quota[c];
    return best;
}

template <typename Vec>
void seeded_shuffle(Vec& v, std::mt19937_64& eng) {
    // Fisher-Yates with explicit draws so the order is stable across standard libraries.
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(eng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

DatasetSplit stratified_split(std::span<const AccidentRecord> records, SplitRatios ratios,
                              std::uint64_t seed) {
    check_ratios(ratios);
    DatasetSplit split;
    const auto regions = region_strata(records);

    std::map<StratumKey, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < records.size(); ++i) {
        StratumKey key{regions[i], season_of(records[i].month), records[i].severity};
        split.stratum_labels[records[i].id] = key;
        strata[key].push_back(i);
    }

    // Strata too small to split are pooled by severity.
    std::map<StratumKey, std::vector<std::size_t>> groups;
    for (auto& [key, members] : strata) {
        if (members.size() < 3) {
            auto& pooled = groups[StratumKey{"*", -1, key.severity}];
            pooled.insert(pooled.end(), members.begin(), members.end());
            split.warnings.push_back("stratum (" + key.region + ", season " +
                                     std::to_string(key.season) + ", severity " +
                                     std::to_string(key.severity) + ") has " +
                                     std::to_string(members.size()) +
                                     " records; falling back to severity-only stratification");
        } else {
            groups[key] = members;
        }
    }

    // Every group gets floor or ceil of each quota. Which quotas round up is
    // chosen to keep the running per-severity error closest to zero.
    std::vector<std::pair<StratumKey, std::vector<std::size_t>>> ordered(groups.begin(), groups.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return a.first.severity < b.first.severity;
    });

    auto eng = rng::engine(seed, "split");
    const std::array<double, 3> share{ratios.train, ratios.val, ratios.test};
    int current_severity = -1;
    std::array<double, 3> carry{};
    for (auto& [key, members] : ordered) {
        if (key.severity != current_severity) {
            current_severity = key.severity;
            carry = {};
        }
        std::sort(members.begin(), members.end());
        seeded_shuffle(members, eng);
        const auto counts = apportion(members.size(), share, carry);
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto& id = records[members[i]].id;
            if (i < counts[0]) split.train_ids.push_back(id);
            else if (i < counts[0] + counts[1]) split.val_ids.push_back(id);
            else split.test_ids.push_back(id);
        }
    }
    return split;
}

std::vector<Fold> kfold_splits(std::span<const AccidentRecord> records, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold requires k >= 2");
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].severity].push_back(i);
    for (int c = 0; c < kNumClasses; ++c) {
        if (!by_class[c].empty() && static_cast<int>(by_class[c].size()) < k) {
            throw DataError("severity class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " records, fewer than k=" +
                            std::to_string(k));
        }
    }
    auto eng = rng::engine(seed, "kfold");
    std::vector<int> fold_of(records.size(), 0);
    int next = 0;
    for (auto& members : by_class) {
        seeded_shuffle(members, eng);
        for (std::size_t idx : members) {
            fold_of[idx] = next;
            next = (next + 1) % k;
        }
    }
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (int f = 0; f < k; ++f) {
            (f == fold_of[i] ? folds[f].val_ids : folds[f].train_ids).push_back(records[i].id);
        }
    }
    return folds;
}

}  // namespace starn
