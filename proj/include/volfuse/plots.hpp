// Small self-contained chart rendering for run artifacts: per-fold loss
// curves and a fold-accuracy bar chart, drawn straight into RGB images with
// a built-in 5×7 bitmap font.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "volfuse/png_io.hpp"

namespace volfuse {

// Draws `text` with the built-in 5×7 font (digits, common lowercase letters,
// and ". - %"); characters without a glyph advance the cursor but stay blank.
// (row, col) is the top-left corner; each glyph cell is 6×8 pixels.
void draw_text(RgbImage& image, int row, int col, const std::string& text, std::uint8_t r,
               std::uint8_t g, std::uint8_t b);

void draw_line(RgbImage& image, int row0, int col0, int row1, int col1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b);

// Train/validation loss per epoch (1-based x axis) with the best epoch
// marked by a vertical line.
void write_loss_curves_png(const std::filesystem::path& file,
                           const std::vector<double>& train_loss,
                           const std::vector<double>& val_loss, int best_epoch);

// One bar per fold on a fixed 0–100% axis, labeled with the exact value.
void write_fold_accuracy_png(const std::filesystem::path& file,
                             const std::vector<double>& accuracy_pct);

}  // namespace volfuse
