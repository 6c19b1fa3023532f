#include "gae/trajectory/synthetic.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/image.hpp"
#include "gae/common/rng.hpp"
#include "gae/trajectory/action_spaces.hpp"
#include "gae/trajectory/corpus.hpp"

namespace gae::trajectory {
namespace fs = std::filesystem;

namespace {

using Color = std::array<std::uint8_t, 3>;

Color random_color(Rng& rng) {
  return {static_cast<std::uint8_t>(rng.uniform_index(256)),
          static_cast<std::uint8_t>(rng.uniform_index(256)),
          static_cast<std::uint8_t>(rng.uniform_index(256))};
}

void fill_rect(RgbImage& img, int x0, int y0, int w, int h, const Color& c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x) {
      auto* p = img.at(x, y);
      p[0] = c[0];
      p[1] = c[1];
      p[2] = c[2];
    }
  }
}

/// Flat background, a header bar in the trajectory's theme color and a few
/// widgets whose layout depends on the step.
RgbImage render_state(const Color& theme, int step, Rng& rng, int w, int h) {
  RgbImage img(w, h);
  fill_rect(img, 0, 0, w, h, {245, 245, 245});
  fill_rect(img, 0, 0, w, std::max(1, h / 6), theme);
  const int widgets = 2 + static_cast<int>(rng.uniform_index(3));
  for (int k = 0; k < widgets; ++k) {
    const int ww = std::max(2, w / 4);
    const int wh = std::max(2, h / 8);
    const int x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(1, w - ww))));
    const int y = h / 6 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(1, h - h / 6 - wh))));
    fill_rect(img, x, y, ww, wh, random_color(rng));
  }
  // A step marker keeps consecutive states distinct.
  fill_rect(img, w - 1 - step % w, h - 1, 1, 1, {0, 0, static_cast<std::uint8_t>(step * 7)});
  return img;
}

}  // namespace

std::string synthetic_word(std::uint64_t seed, int k) {
  static constexpr std::array<const char*, 16> kOnset = {"b", "d", "f", "g", "k", "l", "m", "n",
                                                         "p", "r", "s", "t", "v", "z", "ch", "sh"};
  static constexpr std::array<const char*, 6> kVowel = {"a", "e", "i", "o", "u", "ai"};
  Rng rng(derive_seed(seed, "word/" + std::to_string(k)));
  std::string word;
  for (int s = 0; s < 3; ++s) {
    word += kOnset[rng.uniform_index(kOnset.size())];
    word += kVowel[rng.uniform_index(kVowel.size())];
  }
  // Suffix guarantees uniqueness even if syllables collide.
  return word + std::to_string(k);
}

std::vector<TrajectoryRecord> write_synthetic_corpus(const fs::path& root,
                                                     const SyntheticOptions& options) {
  if (options.trajectories < 0) throw UserError("synthetic corpus: negative trajectory count");
  if (!options.lengths.empty() && static_cast<int>(options.lengths.size()) != options.trajectories) {
    throw UserError("synthetic corpus: lengths list does not match trajectory count");
  }
  if (options.min_steps < 1 || options.max_steps < options.min_steps) {
    throw UserError("synthetic corpus: invalid step range");
  }
  fs::create_directories(root / "images");
  Rng rng(derive_seed(options.seed, "synthetic"));

  ActionSpaceDef space = builtin_action_space("Mind2Web");
  const RgbImage home = [&] {
    Rng home_rng(derive_seed(options.seed, "home"));
    return render_state({30, 30, 30}, 0, home_rng, options.image_width, options.image_height);
  }();
  const std::string home_path = "images/home.png";
  bool home_written = false;

  std::vector<TrajectoryRecord> corpus;
  char id_buf[32];
  for (int k = 0; k < options.trajectories; ++k) {
    std::snprintf(id_buf, sizeof id_buf, "%s-%04d", options.source.c_str(), k);
    TrajectoryRecord t;
    t.id = id_buf;
    t.source = options.source;
    t.action_space = space;
    const int n = options.lengths.empty()
                      ? options.min_steps + static_cast<int>(rng.uniform_index(
                                                static_cast<std::uint64_t>(options.max_steps - options.min_steps + 1)))
                      : options.lengths[static_cast<std::size_t>(k)];
    if (n < 1) throw UserError("synthetic corpus: trajectory length must be >= 1");

    const std::string item = synthetic_word(options.seed, 3 * k);
    const std::string brand = synthetic_word(options.seed, 3 * k + 1);
    const std::string site = synthetic_word(options.seed, 3 * k + 2);
    t.query = "Find the " + item + " " + brand + " listing on " + site;
    const Color theme = random_color(rng);

    for (int i = 1; i <= n; ++i) {
      Step step;
      step.state.index = i;
      step.state.screenshot.width = options.image_width;
      step.state.screenshot.height = options.image_height;
      if (options.shared_home_probability > 0 && rng.uniform() < options.shared_home_probability) {
        step.state.screenshot.path = home_path;
        if (!home_written) {
          write_png(root / home_path, home);
          home_written = true;
        }
      } else {
        step.state.screenshot.path = "images/" + t.id + "_" + std::to_string(i) + ".png";
        Rng img_rng(derive_seed(options.seed, step.state.screenshot.path));
        write_png(root / step.state.screenshot.path,
                  render_state(theme, i, img_rng, options.image_width, options.image_height));
      }
      if (options.fill_descriptions) {
        step.state.description = "The " + site + " page showing " + item + " results, step " +
                                 std::to_string(i) + ".";
      }
      const double x = 0.05 + 0.5 * rng.uniform();
      const double y = 0.2 + 0.5 * rng.uniform();
      switch (i % 3) {
        case 1:
          step.action.operation = "click";
          step.action.value = nullptr;
          break;
        case 2:
          step.action.operation = "type";
          step.action.value = item + " " + brand;
          break;
        default:
          step.action.operation = "select";
          step.action.value = site;
          break;
      }
      step.action.target = BoundingBox{std::round(x * 1e4) / 1e4, std::round(y * 1e4) / 1e4, 0.25, 0.1};
      t.steps.push_back(std::move(step));
    }
    corpus.push_back(std::move(t));
  }

  write_manifest(root / "manifest.jsonl", corpus);
  return load_manifest(root / "manifest.jsonl", root, options.source);
}

}  // namespace gae::trajectory
