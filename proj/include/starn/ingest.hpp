#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace starn {

inline constexpr int kNumClasses = 4;
inline constexpr std::string_view kCsvSchema = "starn-csv/1";

enum class Severity : int { NoInjury = 0, Minor = 1, Moderate = 2, Severe = 3 };

// Category code ranges. Codes are documented in README.md.
inline constexpr int kRoadTypeCodes = 6;
inline constexpr int kLandUseCodes = 6;
inline constexpr int kWeatherCodes = 7;
inline constexpr int kVehicleCodes = 7;

struct AccidentRecord {
    std::string id;
    double latitude = 0.0;
    double longitude = 0.0;
    int hour = 0;
    int day_of_week = 0;
    int day_of_month = 1;
    int month = 1;
    // spatial attributes
    double elevation = 0.0;
    double slope = 0.0;
    double curvature = 0.0;
    int lanes = 1;
    double road_width = 3.5;
    double speed_limit = 50.0;
    int road_type = 0;
    int land_use = 0;
    double flood_risk = 0.0;
    // external attributes
    double temperature = 0.0;
    double precipitation = 0.0;
    double humidity = 0.0;
    double wind_speed = 0.0;
    double visibility = 0.0;
    int weather_condition = 0;
    int vehicle_type = 0;
    double traffic_density = 0.0;
    int severity = 0;
    // optional administrative region, used as the spatial stratum when present
    std::optional<std::string> region;

    bool operator==(const AccidentRecord&) const = default;
};

// Column names in file order. `region` is optional and, when present, last.
const std::vector<std::string>& csv_columns();

// Throws ValidationError naming `row` (1-based data row) and the field.
void validate_record(const AccidentRecord& r, std::size_t row = 0);

std::vector<AccidentRecord> read_csv(std::istream& in, std::string_view schema = kCsvSchema);
std::vector<AccidentRecord> load_csv(const std::filesystem::path& path,
                                     std::string_view schema = kCsvSchema);

void write_csv(std::ostream& out, std::span<const AccidentRecord> records);
void write_csv(const std::filesystem::path& path, std::span<const AccidentRecord> records);

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

struct StratumKey {
    std::string region;
    int season = 0;  // 0 winter, 1 spring, 2 summer, 3 autumn
    int severity = 0;
    auto operator<=>(const StratumKey&) const = default;
};

struct DatasetSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::map<std::string, StratumKey> stratum_labels;
    std::vector<std::string> warnings;
};

// Meteorological season of a month (Dec-Feb winter ... Sep-Nov autumn).
int season_of(int month);

// Region column when present, otherwise a lat/lon bounding-box quadrant "Q0".."Q3".
std::vector<std::string> region_strata(std::span<const AccidentRecord> records);

DatasetSplit stratified_split(std::span<const AccidentRecord> records,
                              SplitRatios ratios, std::uint64_t seed);

struct Fold {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

std::vector<Fold> kfold_splits(std::span<const AccidentRecord> records, int k,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthConfig {
    int grid_rows = 14;
    int grid_cols = 14;
    double spacing_m = 100.0;
    double origin_lat = 40.0;
    double origin_lon = -83.0;
    int min_records_per_node = 8;
    double extra_records_mean = 7.3;  // Poisson mean on top of the minimum
    double gps_sigma_m = 3.0;
    double neighbor_radius_m = 230.0;
    // > 0: elevation, slope and flood risk are Gaussian-smoothed random fields
    // with this length scale instead of independent per segment.
    double terrain_length_m = 150.0;

    // Severity rule coefficients over the standardized spatial (9),
    // encoded temporal (11) and standardized external (8) vectors, plus the
    // standardized mean node risk of neighbors within neighbor_radius_m.
    std::array<double, 9> beta_spatial{0.0, 0.6, 0.5, -0.4, 0.0, 0.8, 0.3, 0.0, 0.5};
    std::array<double, 11> beta_temporal{0, 0, 0, 0, 0, 0, 0, 0, 0.8, 1.2, 0.6};
    std::array<double, 8> beta_external{0.0, 0.6, 0.0, 0.3, -0.6, 0.0, 0.0, 0.5};
    double beta_neighbor = 2.0;

    double noise_scale = 0.05;  // logistic noise scale on the latent score
    double label_noise = 0.05;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthTruth {
    SynthConfig config;
    std::uint64_t seed = 0;
    std::array<double, 3> thresholds{};  // on the latent score
    std::array<double, 9> spatial_mean{}, spatial_std{};
    std::array<double, 8> external_mean{}, external_std{};
    double neighbor_mean = 0.0, neighbor_std = 1.0;
    std::vector<double> node_risk;          // beta_spatial . z_spatial per node
    std::vector<double> neighbor_risk;      // standardized neighbor mean per node
    std::vector<double> record_score;       // latent score per record
    std::vector<int> record_node;           // generating node per record
    std::array<double, 4> expected_class_frequency{};
};

nlohmann::json to_json(const SynthTruth& t);

struct SynthResult {
    std::vector<AccidentRecord> records;
    SynthTruth truth;
};

// Analytic class probabilities of the severity rule for one latent score.
std::array<double, 4> severity_probabilities(double score, const std::array<double, 3>& thresholds,
                                             double noise_scale, double label_noise);

SynthResult synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace starn
