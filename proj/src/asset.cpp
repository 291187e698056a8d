#include "hedgeflow/asset.hpp"

#include "hedgeflow/errors.hpp"

namespace hedgeflow {

const char* to_string(AssetClass c) {
    switch (c) {
        case AssetClass::Crypto: return "crypto";
        case AssetClass::Equity: return "equity";
        case AssetClass::Forex: return "forex";
    }
    return "?";
}

AssetClass asset_class_from_string(const std::string& s) {
    if (s == "crypto") return AssetClass::Crypto;
    if (s == "equity") return AssetClass::Equity;
    if (s == "forex") return AssetClass::Forex;
    throw ValidationError("unknown asset class '" + s + "' (expected crypto|equity|forex)");
}

} // namespace hedgeflow
