#!/usr/bin/env node
import { runJob } from "../cli";

process.exit(runJob("field", process.argv.slice(2)));
