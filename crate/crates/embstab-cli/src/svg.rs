//! Dependency-free SVG rendering of the cluster-count histogram. The
//! reference model's bin is drawn in red. Output bytes are a pure
//! function of the bins.

pub struct Bin {
    pub n_clusters: i64,
    pub count: usize,
    pub is_reference: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;

pub fn histogram_svg(bins: &[Bin]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let max_count = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1);
    let n = bins.len().max(1);
    let slot = plot_w / n as f64;
    let bar_w = (slot * 0.85).max(1.0);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">Cluster counts across models (reference in red)</text>\n",
        MARGIN_LEFT + plot_w / 2.0
    ));

    // y gridlines at up to five round steps
    let step = ((max_count as f64 / 5.0).ceil() as usize).max(1);
    let mut y = 0;
    while y <= max_count {
        let py = MARGIN_TOP + plot_h - (y as f64 / max_count as f64) * plot_h;
        s.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{y}</text>\n",
            MARGIN_LEFT - 6.0,
            py + 4.0
        ));
        y += step;
    }

    // x labels: thin out when there are many bins
    let label_every = (n / 16).max(1);
    for (i, bin) in bins.iter().enumerate() {
        let x = MARGIN_LEFT + i as f64 * slot + (slot - bar_w) / 2.0;
        let h = bin.count as f64 / max_count as f64 * plot_h;
        let y = MARGIN_TOP + plot_h - h;
        let fill = if bin.is_reference { "#c0392b" } else { "#4a7aa8" };
        s.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
             fill=\"{fill}\"/>\n"
        ));
        if i % label_every == 0 {
            s.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"middle\">{}</text>\n",
                x + bar_w / 2.0,
                MARGIN_TOP + plot_h + 16.0,
                bin.n_clusters
            ));
        }
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">number of clusters</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">models</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));
    s.push_str("</svg>\n");
    s
}
