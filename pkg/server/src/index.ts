import { loadAdapter } from "./adapters.js";
import { createApp } from "./server.js";

interface CliOptions {
  port: number;
  adapter: string;
  fixtures?: string;
  nMax: number;
  scoresAvailable: boolean;
}

function parseArgs(argv: string[]): CliOptions {
  const options: CliOptions = {
    port: 8400,
    adapter: "mock-replay",
    nMax: 300,
    scoresAvailable: true,
  };
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) throw new Error(`missing value for ${arg}`);
      return argv[i];
    };
    switch (arg) {
      case "--port":
        options.port = Number(next());
        break;
      case "--adapter":
        options.adapter = next();
        break;
      case "--fixtures":
        options.fixtures = next();
        break;
      case "--n-max":
        options.nMax = Number(next());
        break;
      case "--no-scores":
        options.scoresAvailable = false;
        break;
      default:
        throw new Error(`unknown argument ${arg}`);
    }
  }
  if (!Number.isInteger(options.port) || options.port < 0) {
    throw new Error(`bad --port ${options.port}`);
  }
  if (!Number.isInteger(options.nMax) || options.nMax < 1) {
    throw new Error(`bad --n-max ${options.nMax}`);
  }
  return options;
}

async function run(): Promise<void> {
  const options = parseArgs(process.argv.slice(2));
  const adapter = await loadAdapter(options.adapter, options.fixtures,
                                    options.scoresAvailable);
  const app = createApp({ adapter, nMax: options.nMax });
  const server = app.listen(options.port, () => {
    const address = server.address();
    const port = typeof address === "object" && address ? address.port : options.port;
    console.log(JSON.stringify({ ready: true, port }));
  });
  const shutdown = () => server.close(() => process.exit(0));
  process.on("SIGINT", shutdown);
  process.on("SIGTERM", shutdown);
}

run().catch((err) => {
  console.error(String(err));
  process.exit(1);
});
