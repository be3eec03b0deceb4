#include "aoct/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "aoct/io.hpp"

namespace aoct {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; byte swapping is not implemented");

namespace {

constexpr char kMagic[8] = {'A', 'O', 'C', 'T', 'S', 'D', 'F', '\0'};
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("model file truncated");
  return v;
}

}  // namespace

void save_model(const std::string& path, const MlpSdf& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kFormatVersion);
  put<uint32_t>(os, static_cast<uint32_t>(model.net.arch.activation));
  put<uint32_t>(os, static_cast<uint32_t>(model.net.arch.hidden_width));
  put<uint32_t>(os, static_cast<uint32_t>(model.net.arch.hidden_layers));
  put<int32_t>(os, model.net.arch.skip_layer);
  put<double>(os, model.net.arch.softplus_beta);
  put<double>(os, model.transform.center.x);
  put<double>(os, model.transform.center.y);
  put<double>(os, model.transform.center.z);
  put<double>(os, model.transform.scale);

  std::vector<double> flat;
  model.net.to_flat(flat);
  put<uint64_t>(os, flat.size());
  os.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

MlpSdf load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a model file: " + path);
  const auto version = get<uint32_t>(is);
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported model format version " + std::to_string(version));

  MlpArch arch;
  arch.activation = static_cast<Activation>(get<uint32_t>(is));
  arch.hidden_width = static_cast<int>(get<uint32_t>(is));
  arch.hidden_layers = static_cast<int>(get<uint32_t>(is));
  arch.skip_layer = get<int32_t>(is);
  arch.softplus_beta = get<double>(is);
  arch.validate();

  MlpSdf model;
  model.net = MlpNet<double>(arch);
  model.transform.center.x = get<double>(is);
  model.transform.center.y = get<double>(is);
  model.transform.center.z = get<double>(is);
  model.transform.scale = get<double>(is);

  const auto count = get<uint64_t>(is);
  if (count != static_cast<uint64_t>(arch.parameter_count()))
    throw std::runtime_error("model parameter count mismatch");
  std::vector<double> flat(count);
  is.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw std::runtime_error("model file truncated");
  model.net.from_flat(flat);
  return model;
}

void export_model_json(const std::string& path, const MlpSdf& model) {
  nlohmann::json j;
  j["format"] = "aoct-model";
  j["version"] = kFormatVersion;
  j["arch"] = {{"activation", model.net.arch.activation == Activation::softplus ? "softplus" : "relu"},
               {"hidden_width", model.net.arch.hidden_width},
               {"hidden_layers", model.net.arch.hidden_layers},
               {"skip_layer", model.net.arch.skip_layer},
               {"softplus_beta", model.net.arch.softplus_beta}};
  j["transform"] = {{"center", {model.transform.center.x, model.transform.center.y,
                                model.transform.center.z}},
                    {"scale", model.transform.scale}};
  std::vector<double> flat;
  model.net.to_flat(flat);
  j["parameters"] = flat;
  write_text_file(path, j.dump(2) + "\n");
}

void write_train_log_csv(const std::string& path, const std::vector<TrainStep>& log) {
  std::ostringstream os;
  os << "# aoct-train-log v1\n";
  os << "step,loss,lr,skipped\n";
  for (const TrainStep& s : log)
    os << s.step << ',' << format_double(s.loss) << ',' << format_double(s.lr) << ',' << s.skipped
       << '\n';
  write_text_file(path, os.str());
}

std::vector<TrainStep> read_train_log_csv(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::string line;
  std::vector<TrainStep> log;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
    TrainStep s;
    char c;
    std::istringstream row(line);
    if (!(row >> s.step >> c >> s.loss >> c >> s.lr >> c >> s.skipped))
      throw std::runtime_error("malformed train log row: " + line);
    log.push_back(s);
  }
  return log;
}

}  // namespace aoct
