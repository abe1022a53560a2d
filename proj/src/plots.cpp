#include "volfuse/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "volfuse/errors.hpp"

namespace volfuse {
namespace {

// 5×7 glyphs, one byte per row, bit 4 = leftmost column. Covers digits,
// the lowercase letters the chart labels use, and ". - %".
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E}},
    {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
    {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'f', {0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08}},
    {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
    {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
    {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
    {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
    {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
    {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'y', {0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
};

const std::uint8_t* glyph_rows(char ch) {
  for (const Glyph& g : kFont) {
    if (g.ch == ch) return g.rows;
  }
  return nullptr;
}

void put(RgbImage& img, int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (row >= 0 && row < img.height && col >= 0 && col < img.width) img.set(row, col, r, g, b);
}

std::string fmt(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

void draw_text(RgbImage& image, int row, int col, const std::string& text, std::uint8_t r,
               std::uint8_t g, std::uint8_t b) {
  for (char ch : text) {
    if (const std::uint8_t* rows = glyph_rows(ch)) {
      for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 5; ++x) {
          if (rows[y] & (0x10 >> x)) put(image, row + y, col + x, r, g, b);
        }
      }
    }
    col += 6;
  }
}

void draw_line(RgbImage& image, int row0, int col0, int row1, int col1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b) {
  const int dr = std::abs(row1 - row0), dc = std::abs(col1 - col0);
  const int sr = row0 < row1 ? 1 : -1, sc = col0 < col1 ? 1 : -1;
  int err = (dc > dr ? dc : -dr) / 2;
  int row = row0, col = col0;
  while (true) {
    put(image, row, col, r, g, b);
    if (row == row1 && col == col1) break;
    const int e2 = err;
    if (e2 > -dc) {
      err -= dr;
      col += sc;
    }
    if (e2 < dr) {
      err += dc;
      row += sr;
    }
  }
}

void write_loss_curves_png(const std::filesystem::path& file,
                           const std::vector<double>& train_loss,
                           const std::vector<double>& val_loss, int best_epoch) {
  if (train_loss.empty() || train_loss.size() != val_loss.size()) {
    throw ShapeError("loss curves need equal, non-empty train and val series");
  }
  const int W = 640, H = 400, left = 56, right = 16, top = 16, bottom = 36;
  const int plot_w = W - left - right, plot_h = H - top - bottom;
  RgbImage img(W, H);
  img.fill(255, 255, 255);

  double hi = 0.0;
  for (double v : train_loss) hi = std::max(hi, v);
  for (double v : val_loss) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  hi *= 1.05;

  const int n = static_cast<int>(train_loss.size());
  const auto col_of = [&](int epoch) {  // 1-based epoch
    return n == 1 ? left + plot_w / 2
                  : left + (epoch - 1) * plot_w / (n - 1);
  };
  const auto row_of = [&](double v) {
    return top + static_cast<int>(std::lround((1.0 - v / hi) * plot_h));
  };

  // Axes and ticks.
  draw_line(img, top, left, top + plot_h, left, 0, 0, 0);
  draw_line(img, top + plot_h, left, top + plot_h, left + plot_w, 0, 0, 0);
  for (int t = 0; t <= 4; ++t) {
    const double v = hi * t / 4.0;
    const int row = row_of(v);
    draw_line(img, row, left - 3, row, left, 0, 0, 0);
    draw_text(img, row - 3, 4, fmt(v, 3), 0, 0, 0);
  }
  for (int epoch : {1, (n + 1) / 2, n}) {
    const int col = col_of(epoch);
    draw_line(img, top + plot_h, col, top + plot_h + 3, col, 0, 0, 0);
    draw_text(img, top + plot_h + 6, col - 3, fmt(epoch, 0), 0, 0, 0);
  }
  draw_text(img, H - 12, left + plot_w / 2 - 15, "epoch", 0, 0, 0);
  draw_text(img, 4, 4, "loss", 0, 0, 0);

  // Best-epoch marker behind the curves.
  if (best_epoch >= 1 && best_epoch <= n) {
    const int col = col_of(best_epoch);
    draw_line(img, top, col, top + plot_h, col, 200, 200, 200);
    draw_text(img, top + 2, std::min(col + 4, W - 60), "best " + fmt(best_epoch, 0), 120,
              120, 120);
  }

  const auto polyline = [&](const std::vector<double>& series, std::uint8_t r,
                            std::uint8_t g, std::uint8_t b) {
    for (int e = 1; e < n; ++e) {
      draw_line(img, row_of(series[e - 1]), col_of(e), row_of(series[e]), col_of(e + 1), r,
                g, b);
    }
    if (n == 1) put(img, row_of(series[0]), col_of(1), r, g, b);
  };
  polyline(train_loss, 60, 90, 210);
  polyline(val_loss, 210, 90, 50);

  draw_text(img, top + 4, W - 70, "train", 60, 90, 210);
  draw_text(img, top + 16, W - 70, "val", 210, 90, 50);

  write_png(file, img);
}

void write_fold_accuracy_png(const std::filesystem::path& file,
                             const std::vector<double>& accuracy_pct) {
  if (accuracy_pct.empty()) throw ShapeError("accuracy chart needs at least one fold");
  const int W = 480, H = 320, left = 56, right = 16, top = 16, bottom = 36;
  const int plot_w = W - left - right, plot_h = H - top - bottom;
  RgbImage img(W, H);
  img.fill(255, 255, 255);

  const auto row_of = [&](double pct) {
    return top + static_cast<int>(std::lround((1.0 - pct / 100.0) * plot_h));
  };

  draw_line(img, top, left, top + plot_h, left, 0, 0, 0);
  draw_line(img, top + plot_h, left, top + plot_h, left + plot_w, 0, 0, 0);
  for (int t = 0; t <= 4; ++t) {
    const double pct = 25.0 * t;
    const int row = row_of(pct);
    draw_line(img, row, left - 3, row, left, 0, 0, 0);
    draw_text(img, row - 3, 10, fmt(pct, 0) + "%", 0, 0, 0);
  }
  draw_text(img, 4, 4, "accuracy", 0, 0, 0);

  const int k = static_cast<int>(accuracy_pct.size());
  const int slot = plot_w / k;
  const int bar_w = std::max(slot * 3 / 5, 3);
  for (int i = 0; i < k; ++i) {
    const int col0 = left + i * slot + (slot - bar_w) / 2;
    const double pct = std::clamp(accuracy_pct[i], 0.0, 100.0);
    const int row = row_of(pct);
    for (int col = col0; col < col0 + bar_w; ++col) {
      draw_line(img, row, col, top + plot_h - 1, col, 90, 130, 200);
    }
    draw_text(img, row - 10, col0 + bar_w / 2 - 12, fmt(accuracy_pct[i], 1), 0, 0, 0);
    draw_text(img, top + plot_h + 6, col0 + bar_w / 2 - 18, "fold " + fmt(i, 0), 0, 0, 0);
  }

  write_png(file, img);
}

}  // namespace volfuse
