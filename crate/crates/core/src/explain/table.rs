use super::{Attribution, HighlightReport};

/// Plain-text table: feature, instance value, SHAP, ILIV-SHAP, highlight flag.
/// Rows follow the highlight ranking.
pub fn render_table(shap: &Attribution, iliv: &Attribution, highlights: &HighlightReport) -> String {
    let width = shap.features.iter().map(String::len).max().unwrap_or(0).max("feature".len());
    let mut out = format!(
        "{:<width$}  {:>12}  {:>12}  {:>12}  {}\n",
        "feature", "value", "SHAP", "ILIV-SHAP", "highlighted"
    );
    for r in &highlights.ranking {
        let i = r.index;
        out.push_str(&format!(
            "{:<width$}  {:>12.4}  {:>12.6}  {:>12.6}  {}\n",
            shap.features[i],
            shap.instance[i],
            shap.scores[i],
            iliv.scores[i],
            if r.highlighted { "*" } else { "" }
        ));
    }
    out
}
