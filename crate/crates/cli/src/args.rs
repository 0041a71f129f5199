use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use vrscene::{Aabb, Vec3};

#[derive(Parser, Debug)]
#[command(name = "vrscene", version, about = "Budget-driven scene reduction for real-time city visualization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic city scene
    Scenegen(ScenegenArgs),
    /// Validate a scene and print its statistics
    Stats {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Precompute occlusion visibility over a viewer region
    Bake(BakeArgs),
    /// Crop, decimate and evaluate a scene, then write the stage report
    Optimize(OptimizeArgs),
    /// Run the per-frame pipeline along a camera path
    Simulate(SimulateArgs),
    /// Fit the frame-time model to measured samples
    FitCost {
        /// JSON array of {drawcalls, triangles, frame_time_secs}, or CSV with
        /// the same header
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pose relay and its clients
    #[command(subcommand)]
    Bridge(BridgeCommand),
}

#[derive(Args, Debug)]
pub struct ScenegenArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Block grid, e.g. 10x10
    #[arg(long, default_value = "10x10", value_parser = parse_blocks)]
    pub blocks: (usize, usize),
    #[arg(long, default_value_t = 4)]
    pub buildings_per_block: usize,
    /// Per-building triangle range, e.g. 2000..6000
    #[arg(long, default_value = "2000..6000", value_parser = parse_range)]
    pub triangles: (usize, usize),
    #[arg(long, default_value_t = 8)]
    pub palette: usize,
    #[arg(long, default_value_t = 3)]
    pub lod_levels: usize,
    #[arg(long, default_value_t = 20.0)]
    pub street_width: f64,
    #[arg(long, default_value_t = 60.0)]
    pub block_size: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generator ledger as JSON
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BakeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Viewer region as x0,y0,z0,x1,y1,z1
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pub region: Aabb,
    #[arg(long, default_value_t = vrscene::visibility::DEFAULT_CELL_SIZE)]
    pub cell_size: f64,
    /// Occluders smaller than this volume are ignored
    #[arg(long, default_value_t = 0.0)]
    pub min_occluder_volume: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Keep only nodes touching x0,y0,z0,x1,y1,z1
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pub section: Option<Aabb>,
    /// Vertex-clustering cell edge for static meshes
    #[arg(long)]
    pub decimate_grid: Option<f64>,
    /// Reference camera JSON {pose:{position,rotation}, intrinsics}; defaults
    /// to eye height at the center of the section looking north
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Cost model or fit-cost output; enables the fps row
    #[arg(long)]
    pub cost_model: Option<PathBuf>,
    /// Occlusion cell edge around the reference camera; 0 disables occlusion
    #[arg(long, default_value_t = vrscene::visibility::DEFAULT_CELL_SIZE)]
    pub occlusion_cell: f64,
    /// markdown or csv; inferred from the report extension when absent
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub report: PathBuf,
    /// Write the reduced scene
    #[arg(long)]
    pub out_scene: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub bake: Option<PathBuf>,
    #[arg(long)]
    pub path: PathBuf,
    /// Defaults to the built-in reference calibration
    #[arg(long)]
    pub cost_model: Option<PathBuf>,
    /// Overrides the path file's frame_hz (default 30)
    #[arg(long)]
    pub frame_hz: Option<f64>,
    /// Check the default budget even without explicit limits
    #[arg(long)]
    pub budget: bool,
    #[arg(long)]
    pub budget_fps: Option<f64>,
    #[arg(long)]
    pub budget_drawcalls: Option<usize>,
    #[arg(long)]
    pub budget_polys: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum BridgeCommand {
    /// Run the relay until interrupted
    Serve {
        #[arg(long, default_value = "127.0.0.1:9090")]
        listen: String,
    },
    /// Publish vehicle states sampled along a camera path
    Pub {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        topic: String,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        #[arg(long, default_value = "map")]
        frame_id: String,
    },
    /// Print vehicle states received on a topic
    Sub {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        topic: String,
        /// Frame transform JSON applied to every message
        #[arg(long)]
        transform: Option<PathBuf>,
        /// Stop after this many messages
        #[arg(long)]
        count: Option<usize>,
        /// Also append received states as JSON lines
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure publish-to-delivery latency through the relay
    Measure {
        #[arg(long)]
        addr: String,
        #[arg(short = 'n', default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = vrscene::bridge::DEFAULT_BUDGET_MS)]
        budget_ms: f64,
    },
}

fn parse_blocks(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(['x', 'X']).ok_or("expected AxB, e.g. 10x10")?;
    Ok((x.trim().parse().map_err(|e| format!("{e}"))?, y.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").or_else(|| s.split_once(',')).ok_or("expected MIN..MAX")?;
    Ok((lo.trim().parse().map_err(|e| format!("{e}"))?, hi.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_box(s: &str) -> Result<Aabb, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 6 {
        return Err(format!("expected 6 numbers x0,y0,z0,x1,y1,z1, got {}", v.len()));
    }
    let b = Aabb::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
    if !b.is_valid() {
        return Err("box minimum exceeds maximum or is not finite".into());
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert_eq!(parse_blocks("4x3"), Ok((4, 3)));
        assert!(parse_blocks("4").is_err());
        assert_eq!(parse_range("10..20"), Ok((10, 20)));
        assert_eq!(parse_range("10,20"), Ok((10, 20)));
        let b = parse_box("-1,0,0,1,2,3").unwrap();
        assert_eq!(b.min, Vec3::new(-1.0, 0.0, 0.0));
        assert!(parse_box("1,0,0,0,2,3").is_err());
        assert!(parse_box("1,2").is_err());
    }

    #[test]
    fn every_subcommand_has_help() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        cmd.clone().debug_assert();
        for sub in cmd.get_subcommands() {
            assert!(sub.get_about().is_some(), "{}", sub.get_name());
        }
    }
}
