// Copyright 2026 The vpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Minimal SVG rendering for report figures. Output is a pure function of
// the inputs so reruns produce identical files.

#ifndef VPLEAK_PLOT_H_
#define VPLEAK_PLOT_H_

#include <string>
#include <vector>

namespace vpleak {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

std::string LinePlotSvg(const PlotLabels& labels, const std::vector<Series>& series);

// Points without connecting lines; `note` is printed in the corner.
std::string ScatterPlotSvg(const PlotLabels& labels, const Series& points,
                           const std::string& note);

// cells[row][col], values shown as percentages.
std::string HeatmapSvg(const PlotLabels& labels, const std::vector<std::string>& rows,
                       const std::vector<std::string>& cols,
                       const std::vector<std::vector<double>>& cells);

}  // namespace vpleak

#endif  // VPLEAK_PLOT_H_
