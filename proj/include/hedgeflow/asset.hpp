#pragma once

#include <string>

namespace hedgeflow {

enum class AssetClass { Crypto, Equity, Forex };

const char* to_string(AssetClass c);
AssetClass asset_class_from_string(const std::string& s);

/// Ticker plus the asset class one of the three analysts manages.
struct AssetId {
    std::string symbol;
    AssetClass asset_class = AssetClass::Crypto;

    bool operator==(const AssetId&) const = default;
};

} // namespace hedgeflow
