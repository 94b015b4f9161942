#include "affmap/dataset.hpp"

#include <algorithm>

namespace affmap {

std::size_t BinaryDataset::positives() const {
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), std::int8_t(1)));
}

std::size_t BinaryDataset::negatives() const { return y.size() - positives(); }

BinaryDataset BinaryDataset::subset(const std::vector<std::size_t>& indices) const {
    BinaryDataset out;
    out.x = FeatureMatrix(indices.size(), x.cols());
    out.y.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = x.row(indices[i]);
        std::copy(src.begin(), src.end(), out.x.row(i).begin());
        out.y[i] = y[indices[i]];
    }
    return out;
}

}  // namespace affmap
