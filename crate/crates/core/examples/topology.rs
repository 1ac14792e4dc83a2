//! Builds the three topologies and prints their size and diameter, then the
//! arc dump of a small grid.

use absnet::netgraph::validate;
use absnet::NetworkGraph;

fn main() {
    for (name, g) in [
        ("grid 4x8", NetworkGraph::grid(4, 8)),
        ("hypercube 5", NetworkGraph::hypercube(5)),
        ("mesh 32", NetworkGraph::full_mesh(32)),
    ] {
        validate(&g).expect("builders produce valid graphs");
        println!(
            "{name:<12} nodes {:>3}  arcs {:>4}  diameter {}",
            g.node_count(),
            g.arc_count(),
            g.diameter()
        );
    }
    println!();
    print!("{}", NetworkGraph::grid(2, 2).dump());
}
