#include <fstream>
#include <sstream>

#include "evflow/snn.hpp"
#include "json.hpp"

namespace evflow {

namespace {

constexpr const char* kCheckpointFormat = "evflow-checkpoint";

nlohmann::json config_json(const NetworkConfig& c) {
  return {{"layer_sizes", c.layer_sizes},
          {"beta", c.beta},
          {"threshold", c.threshold},
          {"neurons_per_class", c.neurons_per_class},
          {"reset", c.reset == ResetMode::subtract ? "subtract" : "zero"},
          {"surrogate_slope", c.surrogate_slope}};
}

NetworkConfig config_from(const nlohmann::json& j) {
  NetworkConfig c;
  c.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  c.beta = j.at("beta").get<double>();
  c.threshold = j.at("threshold").get<double>();
  c.neurons_per_class = j.at("neurons_per_class").get<int>();
  const auto reset = j.at("reset").get<std::string>();
  if (reset == "subtract") {
    c.reset = ResetMode::subtract;
  } else if (reset == "zero") {
    c.reset = ResetMode::zero;
  } else {
    throw std::runtime_error("unknown reset mode '" + reset + "'");
  }
  c.surrogate_slope = j.at("surrogate_slope").get<double>();
  c.validate();
  return c;
}

}  // namespace

template <typename Scalar>
std::string checkpoint_to_string(const Network<Scalar>& net) {
  net.validate();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    std::vector<Scalar> w;
    w.reserve(layer.weights.size());
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) w.push_back(layer.weights(i, j));
    }
    std::vector<Scalar> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"rows", layer.weights.rows()},
                      {"cols", layer.weights.cols()},
                      {"weights", w},
                      {"bias", b}});
  }
  const nlohmann::json j{{"format", kCheckpointFormat},
                         {"version", 1},
                         {"scalar", sizeof(Scalar) == 8 ? "float64" : "float32"},
                         {"config", config_json(net.config)},
                         {"layers", layers}};
  return j.dump();
}

template <typename Scalar>
Network<Scalar> checkpoint_from_string(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", std::string()) != kCheckpointFormat) {
    throw std::runtime_error("not an evflow checkpoint");
  }
  Network<Scalar> net;
  net.config = config_from(j.at("config"));
  for (const auto& lj : j.at("layers")) {
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    const auto w = lj.at("weights").get<std::vector<Scalar>>();
    const auto b = lj.at("bias").get<std::vector<Scalar>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows) {
      throw std::runtime_error("checkpoint layer has inconsistent array lengths");
    }
    Layer<Scalar> layer{Matrix<Scalar>(rows, cols), Vector<Scalar>(rows)};
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index k = 0; k < cols; ++k) layer.weights(i, k) = w[i * cols + k];
      layer.bias[i] = b[i];
    }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

template <typename Scalar>
void save_checkpoint(const Network<Scalar>& net, const std::filesystem::path& path) {
  const std::string text = checkpoint_to_string(net);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << text << '\n';
}

template <typename Scalar>
Network<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string<Scalar>(buf.str());
}

template std::string checkpoint_to_string(const Network<float>&);
template std::string checkpoint_to_string(const Network<double>&);
template Network<float> checkpoint_from_string<float>(const std::string&);
template Network<double> checkpoint_from_string<double>(const std::string&);
template void save_checkpoint(const Network<float>&, const std::filesystem::path&);
template void save_checkpoint(const Network<double>&, const std::filesystem::path&);
template Network<float> load_checkpoint<float>(const std::filesystem::path&);
template Network<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace evflow
