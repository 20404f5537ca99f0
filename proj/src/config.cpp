#include "vistrack/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vistrack/errors.hpp"

namespace vistrack {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError("config key " + key + ": expected true/false, got '" + s + "'");
}

}  // namespace

void Config::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (v < 0.0) throw ValidationError(std::string("config: ") + name + " must be >= 0");
  };
  nonneg(loss_cls, "loss.cls");
  nonneg(loss_box, "loss.box");
  nonneg(loss_ctr, "loss.ctr");
  nonneg(loss_mask, "loss.mask");
  nonneg(loss_edge, "loss.edge");
  nonneg(loss_trans, "loss.trans");
  nonneg(tracker_alpha, "tracker.alpha");
  nonneg(tracker_beta, "tracker.beta");
  nonneg(tracker_gamma, "tracker.gamma");
  if (iterations < 1) throw ValidationError("config: optim.iterations must be >= 1");
  if (batch_size < 1) throw ValidationError("config: optim.batch_size must be >= 1");
  if (p_img < 0.0 || p_img > 1.0) throw ValidationError("config: train.p_img must be in [0,1]");
  for (int m : milestones)
    if (m >= iterations)
      throw ValidationError("config: optim.milestones must be below optim.iterations");
  if (tracker_mode != "edge" && tracker_mode != "iou")
    throw ValidationError("config: tracker.mode must be 'edge' or 'iou'");
  perception_config().validate();
}

std::vector<int> Config::effective_milestones() const {
  if (!milestones.empty()) return milestones;
  return {static_cast<int>(std::round(0.60 * iterations)),
          static_cast<int>(std::round(0.85 * iterations))};
}

PerceptionConfig Config::perception_config() const {
  PerceptionConfig p;
  p.channels = channels;
  p.roi_size = roi_size;
  p.mask_size = mask_size;
  p.levels = levels;
  p.num_classes = num_classes;
  p.scale_breaks.clear();
  for (size_t i = 1; i < levels.size(); ++i) p.scale_breaks.push_back(64.0 * (1 << (i - 1)));
  return p;
}

GnnConfig Config::gnn_config() const {
  GnnConfig g;
  g.channels = channels;
  g.roi_size = roi_size;
  g.latent_dim = latent_dim;
  g.edge_dim = edge_dim;
  return g;
}

TrackerConfig Config::tracker_config() const {
  TrackerConfig t;
  t.alpha = tracker_alpha;
  t.beta = tracker_beta;
  t.gamma = tracker_gamma;
  t.theta_new = tracker_theta_new;
  t.epsilon = tracker_epsilon;
  t.theta_iou = tracker_theta_iou;
  t.mode = tracker_mode == "edge" ? TrackerConfig::Mode::kEdge : TrackerConfig::Mode::kIou;
  return t;
}

std::string Config::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "data.train = " << data_train << "\n";
  os << "data.eval = " << data_eval << "\n";
  os << "model.channels = " << channels << "\n";
  os << "model.latent_dim = " << latent_dim << "\n";
  os << "model.edge_dim = " << edge_dim << "\n";
  os << "model.roi_size = " << roi_size << "\n";
  os << "model.mask_size = " << mask_size << "\n";
  os << "model.levels = " << join_ints(levels) << "\n";
  os << "model.num_classes = " << num_classes << "\n";
  os << "loss.cls = " << loss_cls << "\n";
  os << "loss.box = " << loss_box << "\n";
  os << "loss.ctr = " << loss_ctr << "\n";
  os << "loss.mask = " << loss_mask << "\n";
  os << "loss.edge = " << loss_edge << "\n";
  os << "loss.trans = " << loss_trans << "\n";
  os << "optim.lr = " << lr << "\n";
  os << "optim.momentum = " << momentum << "\n";
  os << "optim.iterations = " << iterations << "\n";
  os << "optim.milestones = " << join_ints(milestones) << "\n";
  os << "optim.batch_size = " << batch_size << "\n";
  os << "train.p_img = " << p_img << "\n";
  os << "tracker.alpha = " << tracker_alpha << "\n";
  os << "tracker.beta = " << tracker_beta << "\n";
  os << "tracker.gamma = " << tracker_gamma << "\n";
  os << "tracker.theta_new = " << tracker_theta_new << "\n";
  os << "tracker.epsilon = " << tracker_epsilon << "\n";
  os << "tracker.theta_iou = " << tracker_theta_iou << "\n";
  os << "tracker.mode = " << tracker_mode << "\n";
  os << "resfuser.enabled = " << (resfuser_enabled ? "true" : "false") << "\n";
  os << "gnn.enabled = " << (gnn_enabled ? "true" : "false") << "\n";
  os << "seed = " << seed << "\n";
  return os.str();
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"data.train", [&](const std::string& v) { cfg.data_train = v; }},
      {"data.eval", [&](const std::string& v) { cfg.data_eval = v; }},
      {"model.channels", [&](const std::string& v) { cfg.channels = std::stoi(v); }},
      {"model.latent_dim", [&](const std::string& v) { cfg.latent_dim = std::stoi(v); }},
      {"model.edge_dim", [&](const std::string& v) { cfg.edge_dim = std::stoi(v); }},
      {"model.roi_size", [&](const std::string& v) { cfg.roi_size = std::stoi(v); }},
      {"model.mask_size", [&](const std::string& v) { cfg.mask_size = std::stoi(v); }},
      {"model.levels", [&](const std::string& v) { cfg.levels = parse_int_list(v); }},
      {"model.num_classes", [&](const std::string& v) { cfg.num_classes = std::stoi(v); }},
      {"loss.cls", [&](const std::string& v) { cfg.loss_cls = std::stod(v); }},
      {"loss.box", [&](const std::string& v) { cfg.loss_box = std::stod(v); }},
      {"loss.ctr", [&](const std::string& v) { cfg.loss_ctr = std::stod(v); }},
      {"loss.mask", [&](const std::string& v) { cfg.loss_mask = std::stod(v); }},
      {"loss.edge", [&](const std::string& v) { cfg.loss_edge = std::stod(v); }},
      {"loss.trans", [&](const std::string& v) { cfg.loss_trans = std::stod(v); }},
      {"optim.lr", [&](const std::string& v) { cfg.lr = std::stod(v); }},
      {"optim.momentum", [&](const std::string& v) { cfg.momentum = std::stod(v); }},
      {"optim.iterations", [&](const std::string& v) { cfg.iterations = std::stoi(v); }},
      {"optim.milestones", [&](const std::string& v) { cfg.milestones = parse_int_list(v); }},
      {"optim.batch_size", [&](const std::string& v) { cfg.batch_size = std::stoi(v); }},
      {"train.p_img", [&](const std::string& v) { cfg.p_img = std::stod(v); }},
      {"tracker.alpha", [&](const std::string& v) { cfg.tracker_alpha = std::stod(v); }},
      {"tracker.beta", [&](const std::string& v) { cfg.tracker_beta = std::stod(v); }},
      {"tracker.gamma", [&](const std::string& v) { cfg.tracker_gamma = std::stod(v); }},
      {"tracker.theta_new", [&](const std::string& v) { cfg.tracker_theta_new = std::stod(v); }},
      {"tracker.epsilon", [&](const std::string& v) { cfg.tracker_epsilon = std::stod(v); }},
      {"tracker.theta_iou", [&](const std::string& v) { cfg.tracker_theta_iou = std::stod(v); }},
      {"tracker.mode", [&](const std::string& v) { cfg.tracker_mode = v; }},
      {"resfuser.enabled",
       [&](const std::string& v) { cfg.resfuser_enabled = parse_bool(v, "resfuser.enabled"); }},
      {"gnn.enabled",
       [&](const std::string& v) { cfg.gnn_enabled = parse_bool(v, "gnn.enabled"); }},
      {"seed", [&](const std::string& v) { cfg.seed = std::stoull(v); }},
  };

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                            "'");
    try {
      it->second(value);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("config line " + std::to_string(lineno) + ": bad value for '" + key +
                            "'");
    }
  }
  cfg.validate();
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace vistrack
