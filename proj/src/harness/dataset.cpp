#include "ftm/harness/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ftm/core/error.hpp"
#include "ftm/data/npy.hpp"

namespace fs = std::filesystem;

namespace ftm::harness {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    // trim
    size_t a = tok.find_first_not_of(" \t\r");
    size_t b = tok.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : tok.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

EvalDataset load_dataset(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw EvalError("cannot open dataset manifest: " + manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();

  EvalDataset ds;
  ds.id = fs::path(manifest_path).stem().string();

  std::string line;
  int row = 0;
  std::vector<TensorF> images;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols = split_csv_row(line);
    if (row == 1 && !cols.empty() && cols[0] == "image_path") continue;  // header
    if (cols.size() != 3)
      throw EvalError("manifest " + manifest_path + " row " + std::to_string(row) + ": expected 3 columns, got " +
                      std::to_string(cols.size()));
    int true_label = 0, target_label = 0;
    try {
      true_label = std::stoi(cols[1]);
      target_label = std::stoi(cols[2]);
    } catch (const std::exception&) {
      throw EvalError("manifest " + manifest_path + " row " + std::to_string(row) + ": malformed label");
    }
    if (target_label == true_label)
      throw EvalError("manifest " + manifest_path + " row " + std::to_string(row) +
                      ": target_label equals true_label (" + std::to_string(true_label) + ")");
    fs::path img = cols[0];
    if (img.is_relative()) img = base / img;
    if (!fs::exists(img))
      throw EvalError("manifest " + manifest_path + " row " + std::to_string(row) + ": missing image file " +
                      img.string());
    TensorF t = data::load_npy(img.string());
    if (t.rank() != 3)
      throw EvalError("manifest " + manifest_path + " row " + std::to_string(row) + ": image must be [C,H,W]");
    images.push_back(std::move(t));
    ds.true_labels.push_back(true_label);
    ds.target_labels.push_back(target_label);
    ds.image_paths.push_back(img.string());
  }
  if (images.empty()) throw EvalError("manifest " + manifest_path + ": no rows");
  for (size_t i = 1; i < images.size(); ++i)
    if (!images[i].same_shape(images[0]))
      throw EvalError("manifest " + manifest_path + ": image " + std::to_string(i) + " shape differs");

  int n = static_cast<int>(images.size());
  ds.images = TensorF({n, images[0].dim(0), images[0].dim(1), images[0].dim(2)});
  for (int i = 0; i < n; ++i)
    std::copy(images[static_cast<size_t>(i)].data(),
              images[static_cast<size_t>(i)].data() + images[static_cast<size_t>(i)].numel(), ds.images.slice(i));
  return ds;
}

std::string save_dataset(const std::string& dir, const std::string& name, const TensorF& images,
                         const std::vector<int>& true_labels, const std::vector<int>& target_labels) {
  fs::create_directories(fs::path(dir) / "images");
  std::string manifest = (fs::path(dir) / (name + ".csv")).string();
  std::ofstream f(manifest);
  if (!f) throw EvalError("cannot write manifest: " + manifest);
  f << "image_path,true_label,target_label\n";
  int n = images.dim(0);
  for (int i = 0; i < n; ++i) {
    std::ostringstream fn;
    fn << "images/" << name << "_" << i << ".npy";
    TensorF one({images.dim(1), images.dim(2), images.dim(3)});
    std::copy(images.slice(i), images.slice(i) + images.slice_numel(), one.data());
    data::save_npy((fs::path(dir) / fn.str()).string(), one);
    f << fn.str() << "," << true_labels[static_cast<size_t>(i)] << "," << target_labels[static_cast<size_t>(i)] << "\n";
  }
  return manifest;
}

EvalDataset slice_dataset(const EvalDataset& ds, int count) {
  if (count <= 0 || count >= ds.size()) return ds;
  EvalDataset out;
  out.id = ds.id;
  out.images = TensorF({count, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  std::copy(ds.images.data(), ds.images.data() + out.images.numel(), out.images.data());
  out.true_labels.assign(ds.true_labels.begin(), ds.true_labels.begin() + count);
  out.target_labels.assign(ds.target_labels.begin(), ds.target_labels.begin() + count);
  if (!ds.image_paths.empty()) out.image_paths.assign(ds.image_paths.begin(), ds.image_paths.begin() + count);
  return out;
}

}  // namespace ftm::harness
