//! Mono- versus multi-lingual clusters against a language-resampling null model.

use claimgraph::homophily::{run_homophily, LanguageClusters, LanguageDistribution};
use claimgraph::synth::{generate, SynthSpec};

fn main() -> claimgraph::Result<()> {
    for h in [0.0, 0.5, 1.0] {
        let spec = SynthSpec {
            n_clusters: 300,
            homophily_strength: h,
            seed: 11,
            ..SynthSpec::default()
        };
        let corpus = generate(&spec)?;
        let lang = |id| {
            corpus
                .records
                .iter()
                .find(|r| r.id == id)
                .map(|r| r.language.clone())
                .unwrap()
        };
        let clusters: Vec<Vec<String>> = corpus
            .truth
            .clusters
            .iter()
            .filter(|c| c.member_ids.len() >= 2)
            .map(|c| c.member_ids.iter().map(|&id| lang(id)).collect())
            .collect();
        let dist =
            LanguageDistribution::from_codes(corpus.records.iter().map(|r| r.language.as_str()))?;
        let lc = LanguageClusters {
            clusters,
            ..Default::default()
        };
        let (test, _) = run_homophily(&lc, &dist, 500, 3, 0.01)?;
        println!(
            "homophily {h:.1}: mono observed {} vs expected {:.1}, p = {:.4}",
            test.observed.mono, test.expected_mean.mono, test.p_value
        );
    }
    Ok(())
}
